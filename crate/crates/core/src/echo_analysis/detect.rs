//! Echo-pair detection: find one orthogonal `W` and disjoint atom pairs
//! `(u, w)` with `W·u ≈ ±w`.
//!
//! A hypothesis is a set of signed ordered pairs `(a, b, σ)` meaning
//! `W·u_a ≈ σ·u_b`. An orthogonal `W` can satisfy a set only if it preserves
//! inner products, so two pairs are *compatible* when their atoms are
//! distinct and `|⟨u_a, u_c⟩ − σ_1σ_2·⟨u_b, u_d⟩| ≤ gram_tol`. Each trial seeds
//! a hypothesis with one candidate pair, grows it greedily into a clique of
//! mutually compatible pairs, extends it with pairs whose Gram profile
//! matches the clique on average, fits `W` on the result, and counts inliers
//! `‖W·u_a − σ·u_b‖ ≤ inlier_tol` over all candidate pairs.
//!
//! A tight `gram_tol` rejects pairs between slightly noisy atoms, while a
//! loose one admits spurious cliques that crowd out the true one. The search
//! therefore runs at `gram_tol`, then doubles it up to `gram_tol_max`, capped at a fraction of the RMS
//! inner product between atoms, until a
//! rung after the first detection fails to improve, and the trial with the
//! best truncated-quadratic consensus `Σ 1 − r²/inlier_tol²` over its inliers
//! wins across the rungs searched. `W` is refit on the winner's
//! inliers and atoms are paired greedily by ascending residual.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::orthogonal_procrustes;
use crate::binding::SquareMatrix;
use crate::error::{check_dim, Error, Result};
use crate::feature_space::FeatureDictionary;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoConfig {
    /// Minimum inlier count for a detection; `None` picks
    /// `max(2, min(dim/4, atoms/4))`.
    pub hypothesis_size: Option<usize>,
    /// Number of seed pairs grown into hypotheses.
    pub trials: usize,
    pub inlier_tol: f64,
    /// Starting Gram-consistency tolerance.
    pub gram_tol: f64,
    /// Largest tolerance tried; the search doubles `gram_tol` until it would exceed this.
    pub gram_tol_max: f64,
    pub seed: u64,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            hypothesis_size: None,
            trials: 200,
            inlier_tol: 0.15,
            gram_tol: 0.01,
            gram_tol_max: 0.08,
            seed: 0,
        }
    }
}

impl EchoConfig {
    /// Gram tolerances searched, tightest first.
    pub fn gram_ladder(&self) -> Vec<f64> {
        let mut out = vec![self.gram_tol];
        let mut t = self.gram_tol * 2.0;
        while self.gram_tol > 0.0 && t <= self.gram_tol_max * (1.0 + 1e-12) {
            out.push(t);
            t *= 2.0;
        }
        out
    }

    pub fn hypothesis_size_for(&self, dim: usize, atoms: usize) -> usize {
        self.hypothesis_size
            .unwrap_or_else(|| (dim / 4).min(atoms / 4).max(2))
    }
}

/// `W·u_source ≈ sign·u_target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoPair {
    pub source: usize,
    pub target: usize,
    pub sign: i8,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoReport {
    pub pairs: Vec<EchoPair>,
    pub estimated_w: SquareMatrix,
    pub inlier_count: usize,
    pub hypothesis_size: usize,
    /// Winning trial, or `None` when no hypothesis reached `hypothesis_size`.
    pub trial: Option<usize>,
    /// Gram tolerance of the winning trial.
    pub gram_tol: Option<f64>,
    /// Filled by [`EchoReport::score`] when the true transform is known.
    pub alignment_error: Option<f64>,
    pub multiplicity_factor: Option<f64>,
}

impl EchoReport {
    /// Compare against the true transform `A` on the span of the base atoms:
    /// `min ‖(Ŵ − s·A)V‖_F / ‖A·V‖_F` over `s = ±1` and `Ŵ ∈ {W, Wᵀ}`, since
    /// atom signs and pair orientation are not identifiable.
    pub fn score(&mut self, base: &FeatureDictionary, a: &SquareMatrix) -> Result<()> {
        check_dim(base.dim(), a.side())?;
        check_dim(base.dim(), self.estimated_w.side())?;
        let v = base.atoms();
        let av = a.values() * v;
        let denom = av.norm();
        let w = self.estimated_w.values();
        let mut best = f64::INFINITY;
        for wv in [w * v, w.tr_mul(v)] {
            for s in [1.0, -1.0] {
                best = best.min((&wv - &av * s).norm() / denom);
            }
        }
        self.alignment_error = Some(best);
        self.multiplicity_factor = Some(self.pairs.len() as f64 / base.count() as f64);
        Ok(())
    }
}

/// Second members tried per seed during clique growth.
const GROWTH_BRANCHES: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    a: usize,
    b: usize,
    sign: f64,
}

struct Problem<'a> {
    atoms: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    candidates: Vec<Candidate>,
    gram_tol: f64,
    inlier_tol: f64,
}

/// Inliers of one trial's hypothesis with their residuals.
type Inliers = Vec<(usize, f64)>;

impl Problem<'_> {
    /// Truncated-quadratic consensus: a spurious isometry fitted to its own
    /// clique can match the true one in inlier count, but not in residuals.
    fn consensus(&self, inliers: &[(usize, f64)]) -> f64 {
        let tol_sq = (self.inlier_tol * self.inlier_tol).max(f64::MIN_POSITIVE);
        inliers.iter().map(|(_, r)| 1.0 - r * r / tol_sq).sum()
    }

    /// One search at this problem's Gram tolerance: inliers of every trial.
    fn search(&self, trials: usize, seed: u64) -> Vec<Inliers> {
        // Seeds: forward-oriented candidates ranked by compatibility degree,
        // ties broken by a seeded shuffle.
        let forward: Vec<usize> = (0..self.candidates.len())
            .filter(|&c| self.candidates[c].a < self.candidates[c].b)
            .collect();
        let degrees: Vec<usize> = forward
            .par_iter()
            .map(|&c| (0..self.candidates.len()).filter(|&o| self.compatible(c, o)).count())
            .collect();
        let mut ranked: Vec<usize> = (0..forward.len()).collect();
        ranked.shuffle(&mut rng::stream(seed, "echo_analysis/seed-ties"));
        ranked.sort_by(|&x, &y| degrees[y].cmp(&degrees[x]));
        let seeds: Vec<usize> = ranked.into_iter().take(trials).map(|k| forward[k]).collect();
        seeds
            .par_iter()
            .map(|&seed| {
                let clique = self.extend(self.grow(seed));
                let fwd = self.inliers(&clique, false);
                let rev = self.inliers(&clique, true);
                if self.consensus(&rev) > self.consensus(&fwd) {
                    rev
                } else {
                    fwd
                }
            })
            .collect()
    }

    fn compatible(&self, i: usize, j: usize) -> bool {
        let (p, q) = (self.candidates[i], self.candidates[j]);
        if p.a == q.a || p.a == q.b || p.b == q.a || p.b == q.b {
            return false;
        }
        (self.gram[(p.a, q.a)] - p.sign * q.sign * self.gram[(p.b, q.b)]).abs() <= self.gram_tol
    }

    /// Clique growth from `seed`. The second member is the least reliable
    /// greedy choice, so the best few are each tried; after that the frontier
    /// member with the most compatible frontier partners is added until the
    /// frontier is empty. The largest clique wins, earliest branch on ties.
    fn grow(&self, seed: usize) -> Vec<usize> {
        let frontier: Vec<usize> = (0..self.candidates.len())
            .filter(|&c| self.compatible(seed, c))
            .collect();
        let mut ranked = self.rank_by_partners(&frontier);
        ranked.truncate(GROWTH_BRANCHES);
        let mut best = vec![seed];
        for (_, second) in ranked {
            let mut clique = vec![seed, second];
            let mut frontier: Vec<usize> = frontier
                .iter()
                .copied()
                .filter(|&c| c != second && self.compatible(second, c))
                .collect();
            while let Some(&(_, chosen)) = self.rank_by_partners(&frontier).first() {
                clique.push(chosen);
                frontier.retain(|&c| c != chosen && self.compatible(chosen, c));
            }
            if clique.len() > best.len() {
                best = clique;
            }
        }
        best
    }

    /// Frontier members paired with their compatible-partner count, most
    /// partners first, lowest index on ties.
    fn rank_by_partners(&self, frontier: &[usize]) -> Vec<(usize, usize)> {
        let mut ranked: Vec<(usize, usize)> = frontier
            .iter()
            .map(|&c| (frontier.iter().filter(|&&o| self.compatible(c, o)).count(), c))
            .collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        ranked
    }

    /// Add candidates whose Gram profile against the whole clique matches in
    /// root-mean-square terms. Averaging over every member tolerates the odd
    /// entry beyond `gram_tol` that slightly inaccurate atoms produce, while
    /// an unrelated pair misses by about the typical inner product.
    fn extend(&self, mut clique: Vec<usize>) -> Vec<usize> {
        let mut used = vec![false; self.atoms.ncols()];
        for &c in &clique {
            let p = self.candidates[c];
            used[p.a] = true;
            used[p.b] = true;
        }
        let k = clique.len() as f64;
        let mut scored: Vec<(f64, usize)> = self
            .candidates
            .iter()
            .enumerate()
            .filter(|(_, q)| !used[q.a] && !used[q.b])
            .map(|(i, q)| {
                let ss: f64 = clique
                    .iter()
                    .map(|&c| {
                        let p = self.candidates[c];
                        (self.gram[(p.a, q.a)] - p.sign * q.sign * self.gram[(p.b, q.b)]).powi(2)
                    })
                    .sum();
                ((ss / k).sqrt(), i)
            })
            .filter(|&(rms, _)| rms <= self.gram_tol)
            .collect();
        scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for (_, i) in scored {
            let q = self.candidates[i];
            if !used[q.a] && !used[q.b] {
                used[q.a] = true;
                used[q.b] = true;
                clique.push(i);
            }
        }
        clique
    }

    /// Candidates with `‖W·u_a − σ·u_b‖ ≤ inlier_tol` for the partial isometry
    /// fitted on `members` (orientation reversed when `reverse`), with residuals.
    fn inliers(&self, members: &[usize], reverse: bool) -> Vec<(usize, f64)> {
        let (src, dst): (Vec<usize>, Vec<(usize, f64)>) = members
            .iter()
            .map(|&c| {
                let p = self.candidates[c];
                if reverse {
                    (p.b, (p.a, p.sign))
                } else {
                    (p.a, (p.b, p.sign))
                }
            })
            .unzip();
        let sources = self.atoms.select_columns(&src);
        let mut targets = self.atoms.select_columns(dst.iter().map(|(b, _)| b));
        for (mut col, (_, s)) in targets.column_iter_mut().zip(&dst) {
            col *= *s;
        }
        let images = partial_isometry_images(&sources, &targets, self.atoms);
        self.score_images(&images)
    }

    fn score_images(&self, images: &DMatrix<f64>) -> Vec<(usize, f64)> {
        let cross = images.tr_mul(self.atoms); // ⟨W·u_a, u_b⟩
        let img_sq: Vec<f64> = images.column_iter().map(|c| c.norm_squared()).collect();
        let atom_sq: Vec<f64> = self.atoms.column_iter().map(|c| c.norm_squared()).collect();
        let tol_sq = self.inlier_tol * self.inlier_tol;
        self.candidates
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let r2 = (img_sq[p.a] + atom_sq[p.b] - 2.0 * p.sign * cross[(p.a, p.b)]).max(0.0);
                (r2 <= tol_sq).then(|| (i, r2.sqrt()))
            })
            .collect()
    }
}

/// Images `W·u` of every column of `all` under the orthogonal map that best
/// aligns `sources` to `targets` on their spans (zero on the complement).
fn partial_isometry_images(sources: &DMatrix<f64>, targets: &DMatrix<f64>, all: &DMatrix<f64>) -> DMatrix<f64> {
    let qs = sources.clone().qr();
    let qt = targets.clone().qr();
    let (q_s, r_s) = (qs.q(), qs.r());
    let (q_t, r_t) = (qt.q(), qt.r());
    let k = &r_t * r_s.transpose();
    let svd = k.svd(true, true);
    let core = svd.u.expect("requested U") * svd.v_t.expect("requested Vᵀ");
    &q_t * (core * q_s.tr_mul(all))
}

/// Rungs stop below this fraction of the typical inner product between
/// atoms; beyond it unrelated atoms start forming consistent cliques.
const LADDER_RMS_FRACTION: f64 = 0.2;

fn off_diagonal_rms(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    if n < 2 {
        return 0.0;
    }
    let diag: f64 = gram.diagonal().iter().map(|x| x * x).sum();
    ((gram.norm_squared() - diag) / (n * (n - 1)) as f64).sqrt()
}

fn normalized_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut m = m.clone();
    for (j, mut c) in m.column_iter_mut().enumerate() {
        let n = c.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateData(format!("atom {j} has norm {n}")));
        }
        c /= n;
    }
    Ok(m)
}

/// Detect echo pairs among the columns of `atoms`.
pub fn detect_echo_pairs(atoms: &DMatrix<f64>, cfg: &EchoConfig) -> Result<EchoReport> {
    let (dim, count) = atoms.shape();
    let h = cfg.hypothesis_size_for(dim, count);
    if count < 2 * h || count < 2 {
        return Err(Error::InsufficientAtoms {
            needed: (2 * h).max(2),
            have: count,
        });
    }
    if !(cfg.inlier_tol >= 0.0) || !(cfg.gram_tol >= 0.0) {
        return Err(Error::InvalidParameter("tolerances must be nonnegative".into()));
    }
    let atoms = normalized_columns(atoms)?;
    let mut candidates = Vec::with_capacity(2 * count * (count - 1));
    for a in 0..count {
        for b in 0..count {
            if a != b {
                candidates.push(Candidate { a, b, sign: 1.0 });
                candidates.push(Candidate { a, b, sign: -1.0 });
            }
        }
    }
    let gram = atoms.tr_mul(&atoms);
    let mut problem = Problem {
        gram,
        atoms: &atoms,
        candidates,
        gram_tol: cfg.gram_tol,
        inlier_tol: cfg.inlier_tol,
    };
    let mut outcomes: Vec<(f64, Inliers)> = Vec::new();
    let mut best_so_far: Option<f64> = None;
    let cap = cfg.gram_tol.max(LADDER_RMS_FRACTION * off_diagonal_rms(&problem.gram));
    for tol in cfg.gram_ladder().into_iter().filter(|&t| t <= cap) {
        problem.gram_tol = tol;
        let found = problem.search(cfg.trials, cfg.seed);
        let rung_best = found
            .iter()
            .filter(|i| i.len() >= h)
            .map(|i| problem.consensus(i))
            .reduce(f64::max);
        outcomes.extend(found.into_iter().map(|i| (tol, i)));
        // Looser rungs cost more and only help while they keep improving.
        match (best_so_far, rung_best) {
            (Some(prev), Some(cur)) if cur > prev => best_so_far = Some(cur),
            (Some(_), _) => break,
            (None, cur) => best_so_far = cur,
        }
    }
    let scores: Vec<f64> = outcomes.iter().map(|(_, i)| problem.consensus(i)).collect();
    let best = outcomes
        .iter()
        .enumerate()
        .max_by(|(i, _), (j, _)| scores[*i].total_cmp(&scores[*j]).then(j.cmp(i)));
    let no_detection = |inliers: usize| EchoReport {
        pairs: Vec::new(),
        estimated_w: SquareMatrix::identity(dim),
        inlier_count: inliers,
        hypothesis_size: h,
        trial: None,
        gram_tol: None,
        alignment_error: None,
        multiplicity_factor: None,
    };
    let Some((trial, &(gram_tol, ref inliers))) = best else {
        return Ok(no_detection(0));
    };
    if inliers.len() < h {
        return Ok(no_detection(inliers.len()));
    }

    let src: Vec<usize> = inliers.iter().map(|&(c, _)| problem.candidates[c].a).collect();
    let mut targets = atoms.select_columns(inliers.iter().map(|&(c, _)| &problem.candidates[c].b));
    for (mut col, &(c, _)) in targets.column_iter_mut().zip(inliers) {
        col *= problem.candidates[c].sign;
    }
    let (w, _) = orthogonal_procrustes(&atoms.select_columns(&src), &targets)?;
    let mut scored = problem.score_images(&(w.values() * &atoms));
    scored.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let mut used = vec![false; count];
    let mut pairs = Vec::new();
    for &(c, residual) in &scored {
        let p = problem.candidates[c];
        if !used[p.a] && !used[p.b] {
            used[p.a] = true;
            used[p.b] = true;
            pairs.push(EchoPair {
                source: p.a,
                target: p.b,
                sign: if p.sign > 0.0 { 1 } else { -1 },
                residual,
            });
        }
    }
    Ok(EchoReport {
        pairs,
        estimated_w: w,
        inlier_count: scored.len(),
        hypothesis_size: h,
        trial: Some(trial),
        gram_tol: Some(gram_tol),
        alignment_error: None,
        multiplicity_factor: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::make_random_orthogonal;
    use crate::echo_analysis::echo_truth;
    use crate::feature_space::{make_dictionary, DictionaryKind};

    #[test]
    fn planted_pairs_are_found() {
        let base = make_dictionary(64, 12, DictionaryKind::GaussianNormalized, 4).unwrap();
        let a = make_random_orthogonal(64, 5).unwrap();
        let truth = echo_truth(&base, &a).unwrap();
        let mut report = detect_echo_pairs(truth.atoms(), &EchoConfig::default()).unwrap();
        report.score(&base, &a).unwrap();
        assert_eq!(report.pairs.len(), 12);
        assert!(report.alignment_error.unwrap() <= 1e-8, "{:?}", report.alignment_error);
        for p in &report.pairs {
            assert_eq!(p.source % 12, p.target % 12);
        }
    }

    #[test]
    fn too_few_atoms() {
        let cfg = EchoConfig {
            hypothesis_size: Some(4),
            ..Default::default()
        };
        assert!(matches!(
            detect_echo_pairs(&DMatrix::identity(8, 7), &cfg),
            Err(Error::InsufficientAtoms { needed: 8, have: 7 })
        ));
    }
}
