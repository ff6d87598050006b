//! Ground-truth feature dictionaries and the sparse linear feature model.
//!
//! A representation is `x = Σ aᵢ vᵢ` over unit atoms `vᵢ` (possibly more atoms
//! than dimensions); coefficients are read back approximately with inner
//! products `âᵢ = ⟨x, vᵢ⟩`, exactly when the atoms are orthonormal.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVectorView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, gaussian_matrix, haar_orthogonal, norm};
use crate::rng;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    /// iid standard normal atoms, each normalized.
    GaussianNormalized,
    /// The first `count` columns of a Haar-random orthogonal matrix.
    OrthogonalSubset,
}

/// A set of unit-norm ground-truth atoms stored as the columns of an `n × m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDictionary {
    atoms: DMatrix<f64>,
    coherence: f64,
}

impl FeatureDictionary {
    /// Build a dictionary from column vectors, normalizing each column.
    pub fn from_columns(columns: DMatrix<f64>) -> Result<Self> {
        if columns.nrows() == 0 || columns.ncols() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "dictionary must be at least 1x1, got {}x{}",
                columns.nrows(),
                columns.ncols()
            )));
        }
        let mut atoms = columns;
        for j in 0..atoms.ncols() {
            let n = norm(atoms.column(j).as_slice());
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidDimensions(format!(
                    "atom {j} has norm {n} and cannot be normalized"
                )));
            }
            atoms.column_mut(j).unscale_mut(n);
        }
        let coherence = coherence_of(&atoms);
        Ok(Self { atoms, coherence })
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn count(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atom(&self, i: usize) -> DVectorView<'_, f64> {
        self.atoms.column(i)
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// Cached `max_{i≠j} |⟨vᵢ, vⱼ⟩|`.
    pub fn coherence(&self) -> f64 {
        self.coherence
    }

    /// Images `{M vᵢ}` as a new dictionary (renormalized).
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), m.ncols())?;
        Self::from_columns(m * &self.atoms)
    }

    /// Concatenate the atoms of two dictionaries of equal dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let mut cols: Vec<Vector> = Vec::with_capacity(self.count() + other.count());
        cols.extend(self.atoms.column_iter().map(|c| c.into_owned()));
        cols.extend(other.atoms.column_iter().map(|c| c.into_owned()));
        Self::from_columns(DMatrix::from_columns(&cols))
    }
}

fn coherence_of(atoms: &DMatrix<f64>) -> f64 {
    let m = atoms.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let c = dot(atoms.column(i).as_slice(), atoms.column(j).as_slice()).abs();
            worst = worst.max(c);
        }
    }
    worst.min(1.0)
}

pub fn make_dictionary(
    dim: usize,
    count: usize,
    kind: DictionaryKind,
    seed: u64,
) -> Result<FeatureDictionary> {
    if dim == 0 || count == 0 {
        return Err(Error::InvalidDimensions(format!(
            "dim and count must be positive (dim={dim}, count={count})"
        )));
    }
    let mut rng = rng::stream(seed, "feature_space/dictionary");
    let columns = match kind {
        DictionaryKind::GaussianNormalized => gaussian_matrix(&mut rng, dim, count),
        DictionaryKind::OrthogonalSubset => {
            if count > dim {
                return Err(Error::InvalidDimensions(format!(
                    "orthogonal-subset needs count <= dim (count={count}, dim={dim})"
                )));
            }
            haar_orthogonal(&mut rng, dim).columns(0, count).into_owned()
        }
    };
    FeatureDictionary::from_columns(columns)
}

/// Recomputes the coherence by a direct pairwise scan.
pub fn mutual_coherence(dict: &FeatureDictionary) -> f64 {
    coherence_of(dict.atoms())
}

/// Sparse coefficient vector of fixed length; absent indices are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseCode {
    len: usize,
    entries: BTreeMap<usize, f64>,
}

impl SparseCode {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(len: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut code = Self::new(len);
        for (i, v) in entries {
            code.insert(i, v)?;
        }
        Ok(code)
    }

    /// Full-support code holding every entry of `values`, zeros included.
    pub fn dense(values: &[f64]) -> Self {
        Self {
            len: values.len(),
            entries: values.iter().copied().enumerate().collect(),
        }
    }

    pub fn insert(&mut self, index: usize, value: f64) -> Result<()> {
        if index >= self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                got: index + 1,
            });
        }
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coefficient {index} is not finite"
            )));
        }
        self.entries.insert(index, value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries.get(&index).copied().unwrap_or(0.0)
    }

    /// Number of stored entries (explicit zeros included).
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    /// Indices with a nonzero coefficient.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| *i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(i, v)| (*i, *v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn l1_norm(&self) -> f64 {
        self.iter().map(|(_, v)| v.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Amplitude {
    #[default]
    ConstantOne,
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl Amplitude {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Amplitude::ConstantOne => 1.0,
            Amplitude::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

pub fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Draw a code over `count` atoms: each index independently active with
/// probability `presence`, active coefficients drawn from `amplitude`.
pub fn sample_code_with<R: Rng + ?Sized>(
    count: usize,
    presence: f64,
    amplitude: Amplitude,
    rng: &mut R,
) -> Result<SparseCode> {
    check_probability(presence)?;
    let mut code = SparseCode::new(count);
    for i in 0..count {
        // one uniform per index keeps the stream layout independent of outcomes
        let u: f64 = rng.random();
        if u < presence {
            let a = amplitude.draw(rng);
            code.entries.insert(i, a);
        }
    }
    Ok(code)
}

pub fn sample_code(
    dict: &FeatureDictionary,
    presence: f64,
    amplitude: Amplitude,
    seed: u64,
) -> Result<SparseCode> {
    let mut rng = rng::stream(seed, "feature_space/code");
    sample_code_with(dict.count(), presence, amplitude, &mut rng)
}

/// `x = Σ aᵢ vᵢ`, accumulated in ascending atom order.
pub fn encode(dict: &FeatureDictionary, code: &SparseCode) -> Result<Vector> {
    if code.len() != dict.count() {
        return Err(Error::LengthMismatch {
            expected: dict.count(),
            got: code.len(),
        });
    }
    let mut x = Vector::zeros(dict.dim());
    for (i, a) in code.iter() {
        if a == 0.0 {
            continue;
        }
        for (xk, vk) in x.iter_mut().zip(dict.atom(i).iter()) {
            *xk += a * vk;
        }
    }
    Ok(x)
}

/// Inner-product readback `âᵢ = ⟨x, vᵢ⟩` for every atom.
pub fn readback(dict: &FeatureDictionary, x: &Vector) -> Result<SparseCode> {
    if x.len() != dict.dim() {
        return Err(Error::LengthMismatch {
            expected: dict.dim(),
            got: x.len(),
        });
    }
    let values: Vec<f64> = (0..dict.count())
        .map(|i| dot(x.as_slice(), dict.atom(i).as_slice()))
        .collect();
    Ok(SparseCode::dense(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadbackMetrics {
    pub max_abs_error: f64,
    pub mse: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Compare an estimated code with the truth.
///
/// Truth-active indices are those with a nonzero coefficient; estimate-active
/// ones have `|âᵢ| ≥ active_threshold`. Precision is 1 when nothing is
/// predicted active, recall is 1 when nothing is truly active.
pub fn readback_error(
    truth: &SparseCode,
    estimate: &SparseCode,
    active_threshold: f64,
) -> Result<ReadbackMetrics> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let m = truth.len();
    let mut max_abs_error: f64 = 0.0;
    let mut sq = 0.0;
    let mut true_pos = 0usize;
    let mut predicted = 0usize;
    let mut actual = 0usize;
    for i in 0..m {
        let t = truth.get(i);
        let e = estimate.get(i);
        let d = (t - e).abs();
        max_abs_error = max_abs_error.max(d);
        sq += d * d;
        let is_true = t != 0.0;
        let is_pred = e.abs() >= active_threshold;
        actual += is_true as usize;
        predicted += is_pred as usize;
        true_pos += (is_true && is_pred) as usize;
    }
    let precision = if predicted == 0 {
        1.0
    } else {
        true_pos as f64 / predicted as f64
    };
    let recall = if actual == 0 {
        1.0
    } else {
        true_pos as f64 / actual as f64
    };
    Ok(ReadbackMetrics {
        max_abs_error,
        mse: if m == 0 { 0.0 } else { sq / m as f64 },
        precision,
        recall,
    })
}
