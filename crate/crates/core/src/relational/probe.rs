//! Tree distances, Pythagorean tree embeddings and structural probes
//! `‖M·tᵢ − M·tⱼ‖² ≈ d(i, j)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TokenSequence;
use crate::binding::TreeSpec;
use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, haar_orthogonal, orthonormal_basis};
use crate::rng;
use crate::stats::spearman_with_tolerance;
use crate::Vector;

/// Probe distances closer than this count as tied when ranking.
const TIE_TOLERANCE: f64 = 1e-6;

/// Number of edges on the path between `i` and `j`.
pub fn tree_distance(tree: &TreeSpec, i: usize, j: usize) -> Result<usize> {
    let count = tree.node_count();
    for node in [i, j] {
        if node >= count {
            return Err(Error::InvalidNode { node, count });
        }
    }
    let depths = tree.depths();
    let (mut a, mut b) = (i, j);
    let mut steps = 0;
    while depths[a] > depths[b] {
        a = tree.parent[a].expect("non-root has a parent");
        steps += 1;
    }
    while depths[b] > depths[a] {
        b = tree.parent[b].expect("non-root has a parent");
        steps += 1;
    }
    while a != b {
        a = tree.parent[a].expect("distinct nodes at equal depth are below the root");
        b = tree.parent[b].expect("distinct nodes at equal depth are below the root");
        steps += 2;
    }
    Ok(steps)
}

/// Pythagorean embedding in an explicit basis: the root sits at the origin
/// and the edge into node `c` adds the basis column assigned to that edge
/// (edges numbered in child-index order). Squared distances then equal tree
/// distances exactly.
pub fn embed_tree_pythagorean_in(tree: &TreeSpec, basis: &DMatrix<f64>) -> Result<TokenSequence> {
    tree.validate_structure()?;
    let n = tree.node_count();
    let edges = n - 1;
    if basis.ncols() < edges {
        return Err(Error::InsufficientDimension {
            needed: edges,
            have: basis.ncols(),
        });
    }
    let dim = basis.nrows();
    let mut axis = vec![None; n];
    for (k, (_, c)) in tree.edges().into_iter().enumerate() {
        axis[c] = Some(k);
    }
    let mut tokens = vec![Vector::zeros(dim); n];
    let mut order = tree.postorder();
    order.reverse(); // parents before children
    for c in order {
        if let (Some(p), Some(k)) = (tree.parent[c], axis[c]) {
            tokens[c] = &tokens[p] + basis.column(k);
        }
    }
    TokenSequence::with_random_positions(tokens, 0)
}

/// Pythagorean embedding with a Haar-random orthogonal change of basis.
pub fn embed_tree_pythagorean(tree: &TreeSpec, dim: usize, seed: u64) -> Result<TokenSequence> {
    let needed = tree.node_count().saturating_sub(1);
    if dim < needed || dim == 0 {
        return Err(Error::InsufficientDimension {
            needed: needed.max(1),
            have: dim,
        });
    }
    let mut rng = rng::stream(seed, "relational/pythagorean");
    let q = haar_orthogonal(&mut rng, dim);
    let seq = embed_tree_pythagorean_in(tree, &q)?;
    let positions = super::random_positions(seq.len(), dim, rng::derive_seed(seed, "positions"));
    TokenSequence::new(seq.tokens, positions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralProbe {
    m: DMatrix<f64>,
}

impl StructuralProbe {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() > m.ncols() {
            return Err(Error::InvalidRank {
                rank: m.nrows(),
                dim: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("probe has non-finite entries".into()));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rank(&self) -> usize {
        self.m.nrows()
    }

    pub fn squared_distance(&self, a: &Vector, b: &Vector) -> f64 {
        (&self.m * (a - b)).norm_squared()
    }
}

/// A token sequence labeled with the tree over its tokens.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub tokens: TokenSequence,
    pub tree: TreeSpec,
}

impl LabeledSequence {
    pub fn new(tokens: TokenSequence, tree: TreeSpec) -> Result<Self> {
        tree.validate_structure()?;
        if tokens.len() != tree.node_count() {
            return Err(Error::LengthMismatch {
                expected: tree.node_count(),
                got: tokens.len(),
            });
        }
        Ok(Self { tokens, tree })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Probe rank; `None` means the token dimension.
    pub rank: Option<usize>,
    pub step: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Start descent from the least-squares fit of the squared distances
    /// instead of a Gaussian matrix.
    pub warm_start: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            rank: None,
            step: 1e-2,
            epochs: 200,
            seed: 0,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeFit {
    pub probe: StructuralProbe,
    /// Mean absolute error of the returned probe.
    pub loss: f64,
    /// Loss before each epoch, then after the last one.
    pub history: Vec<f64>,
}

struct PairSet {
    deltas: Vec<Vector>,
    targets: Vec<f64>,
}

fn collect_pairs(data: &[LabeledSequence]) -> Result<PairSet> {
    let mut deltas = Vec::new();
    let mut targets = Vec::new();
    for s in data {
        let t = s.tokens.tokens();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                deltas.push(&t[i] - &t[j]);
                targets.push(tree_distance(&s.tree, i, j)? as f64);
            }
        }
    }
    Ok(PairSet { deltas, targets })
}

fn l1_loss(m: &DMatrix<f64>, pairs: &PairSet) -> f64 {
    if pairs.targets.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .deltas
        .iter()
        .zip(&pairs.targets)
        .map(|(d, t)| ((m * d).norm_squared() - t).abs())
        .sum();
    total / pairs.targets.len() as f64
}

fn l1_gradient(m: &DMatrix<f64>, pairs: &PairSet) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(m.nrows(), m.ncols());
    for (d, t) in pairs.deltas.iter().zip(&pairs.targets) {
        let md = m * d;
        let err = md.norm_squared() - t;
        if err != 0.0 {
            g.ger(2.0 * err.signum(), &md, d, 1.0);
        }
    }
    g / pairs.targets.len().max(1) as f64
}

/// Least-squares fit of a PSD Gram matrix `G` to `Δᵀ G Δ = d` inside the
/// span of the differences, factored as `M = Λ^{1/2} Vᵀ Uᵀ` and truncated to
/// `rank` rows.
fn least_squares_start(pairs: &PairSet, dim: usize, rank: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rank, dim);
    if pairs.deltas.is_empty() {
        return m;
    }
    let u = orthonormal_basis(&DMatrix::from_columns(&pairs.deltas), 1e-9);
    let k = u.ncols();
    if k == 0 {
        return m;
    }
    let unknowns = k * (k + 1) / 2;
    let mut design = DMatrix::zeros(pairs.deltas.len(), unknowns);
    for (row, d) in pairs.deltas.iter().enumerate() {
        let z = u.tr_mul(d);
        let mut col = 0;
        for a in 0..k {
            for b in a..k {
                let w = if a == b { 1.0 } else { 2.0 };
                design[(row, col)] = w * z[a] * z[b];
                col += 1;
            }
        }
    }
    let rhs = Vector::from_column_slice(&pairs.targets);
    let Ok(sol) = design.svd(true, true).solve(&rhs, 1e-10) else {
        return m;
    };
    let mut gk = DMatrix::zeros(k, k);
    let mut col = 0;
    for a in 0..k {
        for b in a..k {
            gk[(a, b)] = sol[col];
            gk[(b, a)] = sol[col];
            col += 1;
        }
    }
    let eig = gk.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    for (row, &e) in order.iter().take(rank).enumerate() {
        let lambda = eig.eigenvalues[e].max(0.0);
        let dir = &u * eig.eigenvectors.column(e);
        m.row_mut(row).copy_from(&(dir.transpose() * lambda.sqrt()));
    }
    m
}

/// Fit a structural probe by full-batch (sub)gradient descent on the mean
/// absolute error over all intra-sequence pairs, returning the best iterate.
pub fn fit_structural_probe(data: &[LabeledSequence], cfg: &ProbeConfig) -> Result<ProbeFit> {
    let Some(first) = data.first() else {
        return Err(Error::InvalidParameter("no labeled sequences".into()));
    };
    let dim = first.tokens.dim();
    if data.iter().any(|s| s.tokens.dim() != dim && !s.tokens.is_empty()) {
        return Err(Error::InvalidParameter("sequences differ in dimension".into()));
    }
    let rank = cfg.rank.unwrap_or(dim);
    if rank == 0 || rank > dim {
        return Err(Error::InvalidRank { rank, dim });
    }
    if !(cfg.step > 0.0) || !cfg.step.is_finite() {
        return Err(Error::InvalidParameter(format!("step size {} must be positive", cfg.step)));
    }
    let pairs = collect_pairs(data)?;
    let mut m = if cfg.warm_start {
        least_squares_start(&pairs, dim, rank)
    } else {
        let mut rng = rng::stream(cfg.seed, "relational/probe-init");
        gaussian_matrix(&mut rng, rank, dim) / (dim as f64).sqrt()
    };
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut best = (l1_loss(&m, &pairs), m.clone());
    for _ in 0..cfg.epochs {
        let loss = l1_loss(&m, &pairs);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("probe loss became {loss}")));
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, m.clone());
        }
        m -= l1_gradient(&m, &pairs) * cfg.step;
    }
    let loss = l1_loss(&m, &pairs);
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("probe loss became {loss}")));
    }
    history.push(loss);
    if loss < best.0 {
        best = (loss, m);
    }
    Ok(ProbeFit {
        probe: StructuralProbe::new(best.1)?,
        loss: best.0,
        history,
    })
}

/// Mean absolute error of `probe` over all intra-sequence pairs.
pub fn probe_loss(probe: &StructuralProbe, data: &[LabeledSequence]) -> Result<f64> {
    Ok(l1_loss(&probe.m, &collect_pairs(data)?))
}

/// `(probe squared distance, tree distance)` for all pairs `i < j` of each sequence.
pub fn probe_distances(probe: &StructuralProbe, data: &[LabeledSequence]) -> Result<Vec<(f64, f64)>> {
    let pairs = collect_pairs(data)?;
    Ok(pairs
        .deltas
        .iter()
        .zip(pairs.targets)
        .map(|(d, t)| ((&probe.m * d).norm_squared(), t))
        .collect())
}

/// Spearman correlation between probe distances and tree distances, with
/// probe distances within 1e−6 of each other ranked as ties.
pub fn probe_spearman(probe: &StructuralProbe, data: &[LabeledSequence]) -> Result<f64> {
    let (pred, truth): (Vec<f64>, Vec<f64>) = probe_distances(probe, data)?.into_iter().unzip();
    Ok(spearman_with_tolerance(&pred, &truth, TIE_TOLERANCE))
}
