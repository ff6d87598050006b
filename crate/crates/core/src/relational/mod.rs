//! Multi-token mechanisms: linear relational embeddings, positional-reference
//! and ID-subspace binding, token differences, and tree geometry for
//! structural probes.

mod probe;

pub use probe::{
    embed_tree_pythagorean, embed_tree_pythagorean_in, fit_structural_probe, probe_distances,
    probe_loss, probe_spearman, tree_distance, LabeledSequence, ProbeConfig, ProbeFit,
    StructuralProbe,
};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binding::SquareMatrix;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{haar_orthogonal, matvec};
use crate::rng::{self, gaussian_vector};
use crate::Vector;

/// Relation `tᵢ ≈ A·tⱼ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel {
    pub a: SquareMatrix,
    pub b: Vector,
}

impl RelationModel {
    pub fn new(a: SquareMatrix, b: Vector) -> Result<Self> {
        check_dim(a.side(), b.len())?;
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

pub fn lre_apply(rel: &RelationModel, t_j: &Vector) -> Result<Vector> {
    Ok(rel.a.apply(t_j)? + &rel.b)
}

/// Fitted relation together with the Frobenius norm of its residual.
#[derive(Debug, Clone)]
pub struct LreFit {
    pub model: RelationModel,
    pub residual: f64,
}

/// Least-squares fit of `(A, b)` from `(t_j, t_i)` pairs, solving the normal
/// equations of the augmented design `[t_j; 1]` by Cholesky.
pub fn lre_fit(pairs: &[(Vector, Vector)]) -> Result<LreFit> {
    let Some((first, _)) = pairs.first() else {
        return Err(Error::RankDeficientDesign("no pairs".into()));
    };
    let n = first.len();
    if pairs.len() < n + 1 {
        return Err(Error::RankDeficientDesign(format!(
            "{} pairs cannot determine a {n}-dimensional affine map (need {})",
            pairs.len(),
            n + 1
        )));
    }
    let mut design = DMatrix::zeros(n + 1, pairs.len());
    let mut targets = DMatrix::zeros(n, pairs.len());
    for (k, (tj, ti)) in pairs.iter().enumerate() {
        check_dim(n, tj.len())?;
        check_dim(n, ti.len())?;
        design.view_mut((0, k), (n, 1)).copy_from(tj);
        design[(n, k)] = 1.0;
        targets.set_column(k, ti);
    }
    let gram = &design * design.transpose();
    let rhs = &design * targets.transpose();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficientDesign("design Gram matrix is singular".into()))?;
    // A positive pivot can still be numerically zero; compare against the scale.
    let l = chol.l();
    let scale = gram.diagonal().amax();
    let min_pivot = (0..=n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-12 * scale {
        return Err(Error::RankDeficientDesign(format!(
            "design is numerically rank deficient (pivot {min_pivot:e})"
        )));
    }
    let w = chol.solve(&rhs).transpose(); // n × (n+1): [A | b]
    let a = w.columns(0, n).into_owned();
    let b: Vector = w.column(n).into_owned();
    let residual = (&w * &design - &targets).norm();
    Ok(LreFit {
        model: RelationModel::new(SquareMatrix::general(a)?, b)?,
        residual,
    })
}

/// Token vectors with positional embeddings of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    tokens: Vec<Vector>,
    positions: Vec<Vector>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<Vector>, positions: Vec<Vector>) -> Result<Self> {
        if tokens.len() != positions.len() {
            return Err(Error::LengthMismatch {
                expected: tokens.len(),
                got: positions.len(),
            });
        }
        if let Some(first) = tokens.first() {
            let dim = first.len();
            for v in tokens.iter().chain(&positions) {
                check_dim(dim, v.len())?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite token entry".into()));
                }
            }
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if (&positions[i] - &positions[j]).norm() <= 1e-6 {
                    return Err(Error::InvalidParameter(format!(
                        "positions {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { tokens, positions })
    }

    /// Tokens with default positional embeddings from [`random_positions`].
    pub fn with_random_positions(tokens: Vec<Vector>, seed: u64) -> Result<Self> {
        let dim = tokens.first().map_or(1, Vector::len);
        let positions = random_positions(tokens.len(), dim, seed);
        Self::new(tokens, positions)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens.first().map_or(0, Vector::len)
    }

    pub fn tokens(&self) -> &[Vector] {
        &self.tokens
    }

    pub fn positions(&self) -> &[Vector] {
        &self.positions
    }

    /// Tokens as the rows of a matrix.
    pub fn token_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim(), |r, c| self.tokens[r][c])
    }
}

/// Positional embeddings: orthonormal when `count ≤ dim`, otherwise random
/// unit vectors (distinct with probability one).
pub fn random_positions(count: usize, dim: usize, seed: u64) -> Vec<Vector> {
    let mut rng = rng::stream(seed, "relational/positions");
    if count <= dim {
        let q = haar_orthogonal(&mut rng, dim);
        (0..count).map(|j| q.column(j).into_owned()).collect()
    } else {
        (0..count)
            .map(|_| {
                let v = gaussian_vector(&mut rng, dim);
                let n = v.norm();
                v / n
            })
            .collect()
    }
}

/// `r = tᵢ + A_r·pⱼ`.
pub fn bind_positional(t_i: &Vector, a_r: &SquareMatrix, p_j: &Vector) -> Result<Vector> {
    check_dim(t_i.len(), a_r.side())?;
    Ok(t_i + a_r.apply(p_j)?)
}

/// Index of the position whose image `A_r·pⱼ` best matches `r − t̂ᵢ`
/// (largest inner product, lowest index on ties).
pub fn read_position(
    r: &Vector,
    t_i_estimate: &Vector,
    a_r: &SquareMatrix,
    positions: &[Vector],
) -> Result<usize> {
    check_dim(r.len(), t_i_estimate.len())?;
    let residual = r - t_i_estimate;
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in positions.iter().enumerate() {
        let score = residual.dot(&a_r.apply(p)?);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::InvalidParameter("no candidate positions".into()))
}

/// Low-rank ID projection `A_id` (rank × dim) with a match threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct IdSubspace {
    a_id: DMatrix<f64>,
    tau: f64,
}

impl IdSubspace {
    pub fn new(a_id: DMatrix<f64>, tau: f64) -> Result<Self> {
        if a_id.nrows() > a_id.ncols() {
            return Err(Error::InvalidRank {
                rank: a_id.nrows(),
                dim: a_id.ncols(),
            });
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("threshold {tau} must be >= 0")));
        }
        Ok(Self { a_id, tau })
    }

    pub fn rank(&self) -> usize {
        self.a_id.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a_id.ncols()
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.a_id
    }

    pub fn threshold(&self) -> f64 {
        self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdMatch {
    pub matched: bool,
    pub distance: f64,
}

pub fn id_match(sub: &IdSubspace, t_i: &Vector, t_j: &Vector) -> Result<IdMatch> {
    check_dim(sub.dim(), t_i.len())?;
    check_dim(sub.dim(), t_j.len())?;
    let distance = matvec(&sub.a_id, &(t_i - t_j)).norm();
    Ok(IdMatch {
        matched: distance <= sub.tau,
        distance,
    })
}

/// Which token pairs to difference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "pairs")]
pub enum PairPolicy {
    /// `(i, i+1)` for consecutive tokens.
    Adjacent,
    /// Every `(i, j)` with `i < j`, in lexicographic order.
    AllPairs,
    /// Explicit pairs in the given order.
    Labeled(Vec<(usize, usize)>),
}

impl PairPolicy {
    pub fn pairs(&self, len: usize) -> Result<Vec<(usize, usize)>> {
        Ok(match self {
            Self::Adjacent => (1..len).map(|i| (i - 1, i)).collect(),
            Self::AllPairs => (0..len)
                .flat_map(|i| (i + 1..len).map(move |j| (i, j)))
                .collect(),
            Self::Labeled(pairs) => {
                for &(i, j) in pairs {
                    for node in [i, j] {
                        if node >= len {
                            return Err(Error::InvalidNode { node, count: len });
                        }
                    }
                }
                pairs.clone()
            }
        })
    }
}

/// `tᵢ − tⱼ` for every selected pair `(i, j)`.
pub fn token_differences(seq: &TokenSequence, policy: &PairPolicy) -> Result<Vec<Vector>> {
    if seq.len() < 2 {
        return Err(Error::TooFewTokens {
            needed: 2,
            have: seq.len(),
        });
    }
    Ok(policy
        .pairs(seq.len())?
        .into_iter()
        .map(|(i, j)| &seq.tokens[i] - &seq.tokens[j])
        .collect())
}

/// Sequences whose labeled pairs differ by one of several hidden relation vectors.
#[derive(Debug, Clone)]
pub struct PlantedRelations {
    /// Unit relation vectors as columns (dim × relation count).
    pub relations: DMatrix<f64>,
    pub sequences: Vec<TokenSequence>,
    /// Per sequence, the labeled `(i, j)` pairs with `tᵢ − tⱼ = relation + noise`.
    pub labeled: Vec<Vec<(usize, usize)>>,
    /// Per sequence, which relation each labeled pair carries.
    pub relation_of_pair: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedRelationsConfig {
    pub dim: usize,
    pub relations: usize,
    pub sequences: usize,
    pub tokens_per_sequence: usize,
    pub noise: f64,
}

impl Default for PlantedRelationsConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            relations: 8,
            sequences: 400,
            tokens_per_sequence: 6,
            noise: 0.05,
        }
    }
}

/// Build sequences of random "head" tokens, each followed by a dependent token
/// `t_dep = t_head + r_c + noise·g`; the labeled pairs are `(dep, head)`.
pub fn planted_relation_sequences(cfg: &PlantedRelationsConfig, seed: u64) -> Result<PlantedRelations> {
    if cfg.dim == 0 || cfg.relations == 0 || cfg.tokens_per_sequence < 2 {
        return Err(Error::InvalidParameter(
            "planted relations need dim, relations >= 1 and at least 2 tokens".into(),
        ));
    }
    let mut rng = rng::stream(seed, "relational/planted");
    let mut relations = crate::linalg::gaussian_matrix(&mut rng, cfg.dim, cfg.relations);
    for mut c in relations.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let pairs_per_seq = cfg.tokens_per_sequence / 2;
    let mut sequences = Vec::with_capacity(cfg.sequences);
    let mut labeled = Vec::with_capacity(cfg.sequences);
    let mut relation_of_pair = Vec::with_capacity(cfg.sequences);
    for s in 0..cfg.sequences {
        let mut tokens = Vec::with_capacity(cfg.tokens_per_sequence);
        let mut pairs = Vec::new();
        let mut which = Vec::new();
        for _ in 0..pairs_per_seq {
            let head = gaussian_vector(&mut rng, cfg.dim) / (cfg.dim as f64).sqrt();
            let c = rng.random_range(0..cfg.relations);
            let dep = &head + relations.column(c) + gaussian_vector(&mut rng, cfg.dim) * cfg.noise;
            pairs.push((tokens.len() + 1, tokens.len()));
            which.push(c);
            tokens.push(head);
            tokens.push(dep);
        }
        if tokens.len() < cfg.tokens_per_sequence {
            tokens.push(gaussian_vector(&mut rng, cfg.dim) / (cfg.dim as f64).sqrt());
        }
        let pos_seed = rng::derive_seed(seed, &format!("relational/planted/positions#{s}"));
        sequences.push(TokenSequence::with_random_positions(tokens, pos_seed)?);
        labeled.push(pairs);
        relation_of_pair.push(which);
    }
    Ok(PlantedRelations {
        relations,
        sequences,
        labeled,
        relation_of_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn lre_apply_examples() {
        let id = RelationModel::new(SquareMatrix::identity(2), Vector::zeros(2)).unwrap();
        assert_eq!(lre_apply(&id, &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
        let two = RelationModel::new(
            SquareMatrix::general(DMatrix::identity(2, 2) * 2.0).unwrap(),
            Vector::zeros(2),
        )
        .unwrap();
        assert_eq!(lre_apply(&two, &v(&[1.0, 2.0])).unwrap(), v(&[2.0, 4.0]));
        assert!(lre_apply(&two, &v(&[1.0])).is_err());
    }

    #[test]
    fn lre_fit_identity_pairs() {
        let mut rng = rng::stream(1, "lre-id");
        let pairs: Vec<_> = (0..12)
            .map(|_| {
                let t = gaussian_vector(&mut rng, 4);
                (t.clone(), t)
            })
            .collect();
        let fit = lre_fit(&pairs).unwrap();
        assert!((fit.model.a.values() - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert!(fit.model.b.amax() < 1e-10);
    }

    #[test]
    fn lre_fit_needs_enough_pairs() {
        let pairs: Vec<_> = (0..3).map(|i| (v(&[i as f64, 1.0, 0.0]), v(&[0.0, 0.0, 0.0]))).collect();
        assert!(matches!(lre_fit(&pairs), Err(Error::RankDeficientDesign(_))));
        // enough pairs but collinear inputs
        let pairs: Vec<_> = (0..10).map(|i| (v(&[i as f64, 0.0]), v(&[0.0, 0.0]))).collect();
        assert!(matches!(lre_fit(&pairs), Err(Error::RankDeficientDesign(_))));
    }

    #[test]
    fn positional_with_zero_matrix_is_token() {
        let t = v(&[1.0, -1.0]);
        assert_eq!(bind_positional(&t, &SquareMatrix::zeros(2), &v(&[5.0, 5.0])).unwrap(), t);
    }

    #[test]
    fn id_match_examples() {
        let sub = IdSubspace::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 1e-6).unwrap();
        let m = id_match(&sub, &v(&[0.5, 3.0]), &v(&[0.5, -7.0])).unwrap();
        assert!(m.matched && m.distance == 0.0);
        let m = id_match(&sub, &v(&[0.4, 3.0]), &v(&[0.5, 3.0])).unwrap();
        assert!(!m.matched);
        assert!(IdSubspace::new(DMatrix::zeros(3, 2), 0.0).is_err());
    }

    #[test]
    fn difference_policies() {
        let seq = TokenSequence::with_random_positions(vec![v(&[1.0, 0.0]), v(&[1.0, 0.0])], 0).unwrap();
        let d = token_differences(&seq, &PairPolicy::Adjacent).unwrap();
        assert_eq!(d, vec![Vector::zeros(2)]);

        let seq = TokenSequence::with_random_positions(
            vec![v(&[1.0, 0.0]), v(&[0.0, 2.0]), v(&[3.0, 3.0])],
            0,
        )
        .unwrap();
        let d = token_differences(&seq, &PairPolicy::AllPairs).unwrap();
        assert_eq!(d, vec![v(&[1.0, -2.0]), v(&[-2.0, -3.0]), v(&[-3.0, -1.0])]);

        let one = TokenSequence::with_random_positions(vec![v(&[1.0])], 0).unwrap();
        assert!(matches!(
            token_differences(&one, &PairPolicy::AllPairs),
            Err(Error::TooFewTokens { .. })
        ));
        assert!(matches!(
            token_differences(&seq, &PairPolicy::Labeled(vec![(0, 5)])),
            Err(Error::InvalidNode { node: 5, .. })
        ));
    }

    #[test]
    fn duplicate_positions_rejected() {
        let p = v(&[1.0, 0.0]);
        assert!(TokenSequence::new(vec![p.clone(), p.clone()], vec![p.clone(), p]).is_err());
    }

    #[test]
    fn planted_pairs_differ_by_relation() {
        let cfg = PlantedRelationsConfig {
            noise: 0.0,
            sequences: 5,
            ..Default::default()
        };
        let planted = planted_relation_sequences(&cfg, 9).unwrap();
        for (s, seq) in planted.sequences.iter().enumerate() {
            let diffs = token_differences(seq, &PairPolicy::Labeled(planted.labeled[s].clone())).unwrap();
            for (d, &c) in diffs.iter().zip(&planted.relation_of_pair[s]) {
                assert!((d - planted.relations.column(c)).amax() < 1e-12);
            }
        }
    }
}
