//! Feature recovery: sparse coding, K-SVD, a small sparse autoencoder, and
//! matching of learned atoms against ground truth.

mod ksvd;
mod omp;
mod sae;

pub use ksvd::{fit_dictionary_ksvd, KsvdConfig};
pub use omp::{omp_sparse_code, OmpResult, OmpStop};
pub use sae::{
    fit_dictionary_sae, sae_gradient_check, sae_gradient_check_with, train_sae, SaeConfig, SaeFit, SaeGradients,
    SaeModel, SaeOptimizer,
};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::feature_space::FeatureDictionary;

/// Default `|cos|` a learned atom needs to count as recovering a truth atom.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnMethod {
    Ksvd,
    Sae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub method: LearnMethod,
    pub iterations: usize,
    pub final_loss: f64,
    pub seed: u64,
    /// K-SVD: loss after each iteration. SAE: mean loss of each epoch.
    pub loss_history: Vec<f64>,
    pub hyperparameters: BTreeMap<String, f64>,
}

/// Unit-norm atoms (columns) produced by a learner, with training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedDictionary {
    atoms: DMatrix<f64>,
    pub meta: TrainingMeta,
}

impl LearnedDictionary {
    /// Normalize columns (zero columns become the first basis vector) and apply
    /// the sign convention: the first nonzero coordinate is nonnegative.
    pub fn new(mut atoms: DMatrix<f64>, meta: TrainingMeta) -> Self {
        for mut c in atoms.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            } else {
                c.fill(0.0);
                c[0] = 1.0;
            }
            if c.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0) {
                c.neg_mut();
            }
        }
        Self { atoms, meta }
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn count(&self) -> usize {
        self.atoms.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomMatch {
    pub truth: usize,
    /// Absolute cosine, in `[0, 1]`.
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub threshold: f64,
    /// Learned atom index → matched truth atom.
    pub assignment: BTreeMap<usize, AtomMatch>,
    pub unmatched_learned: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
    pub recovery_rate: f64,
}

/// Greedy one-to-one matching on descending `|cos|` between columns of
/// `learned` and `truth`; pairs below `threshold` stay unmatched. Ties go to
/// the lower learned index, then the lower truth index.
pub fn match_columns(learned: &DMatrix<f64>, truth: &DMatrix<f64>, threshold: f64) -> Result<MatchReport> {
    check_dim(truth.nrows(), learned.nrows())?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!(
            "match threshold {threshold} must lie in [0, 1]"
        )));
    }
    let unit = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        m
    };
    let cos = unit(learned).tr_mul(&unit(truth));
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for l in 0..cos.nrows() {
        for t in 0..cos.ncols() {
            let c = cos[(l, t)].abs().min(1.0);
            if c >= threshold {
                candidates.push((l, t, c));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut learned_used = vec![false; cos.nrows()];
    let mut truth_used = vec![false; cos.ncols()];
    let mut assignment = BTreeMap::new();
    for (l, t, c) in candidates {
        if !learned_used[l] && !truth_used[t] {
            learned_used[l] = true;
            truth_used[t] = true;
            assignment.insert(l, AtomMatch { truth: t, cosine: c });
        }
    }
    let unmatched = |used: &[bool]| used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
    let recovery_rate = if truth.ncols() == 0 {
        0.0
    } else {
        assignment.len() as f64 / truth.ncols() as f64
    };
    Ok(MatchReport {
        threshold,
        assignment,
        unmatched_learned: unmatched(&learned_used),
        unmatched_truth: unmatched(&truth_used),
        recovery_rate,
    })
}

pub fn match_atoms(learned: &LearnedDictionary, truth: &FeatureDictionary, threshold: f64) -> Result<MatchReport> {
    match_columns(learned.atoms(), truth.atoms(), threshold)
}
