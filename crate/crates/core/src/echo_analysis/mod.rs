//! Feature multiplicity: compositional samples `z = x + A·y`, echo-pair
//! detection among learned atoms, orthogonal alignment, and the `m²` tensor
//! features produced by projected outer products.

mod detect;

pub use detect::{detect_echo_pairs, EchoConfig, EchoPair, EchoReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::binding::{bind_hrr, SquareMatrix};
use crate::dict_learning::MatchReport;
use crate::error::{check_dim, Error, Result};
use crate::feature_space::{encode, sample_code_with, Amplitude, FeatureDictionary, SparseCode};
use crate::rng;
use crate::Vector;

/// Samples as columns of `z`, with the codes that produced each one.
#[derive(Debug, Clone)]
pub struct PairSamples {
    pub z: DMatrix<f64>,
    pub x_codes: Vec<SparseCode>,
    pub y_codes: Vec<SparseCode>,
}

impl PairSamples {
    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.ncols() == 0
    }

    /// Mean of `|supp x| + |supp y|` over samples.
    pub fn mean_support(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let total: usize = self
            .x_codes
            .iter()
            .zip(&self.y_codes)
            .map(|(x, y)| x.support_len() + y.support_len())
            .sum();
        total as f64 / self.len() as f64
    }
}

/// Draw `count` samples `z = encode(x) + A·encode(y)` with independent codes.
/// Sample `k` uses its own random stream, so samples can be generated in any
/// order or in parallel.
pub fn generate_pair_samples(
    dict: &FeatureDictionary,
    a: &SquareMatrix,
    count: usize,
    presence: f64,
    amplitude: Amplitude,
    seed: u64,
) -> Result<PairSamples> {
    check_dim(dict.dim(), a.side())?;
    crate::feature_space::check_probability(presence)?;
    let mut z = DMatrix::zeros(dict.dim(), count);
    let mut x_codes = Vec::with_capacity(count);
    let mut y_codes = Vec::with_capacity(count);
    for k in 0..count {
        let mut rng = rng::substream(seed, "echo_analysis/sample", k as u64);
        let x = sample_code_with(dict.count(), presence, amplitude, &mut rng)?;
        let y = sample_code_with(dict.count(), presence, amplitude, &mut rng)?;
        let col = encode(dict, &x)? + a.apply(&encode(dict, &y)?)?;
        z.set_column(k, &col);
        x_codes.push(x);
        y_codes.push(y);
    }
    Ok(PairSamples { z, x_codes, y_codes })
}

/// The `2m` ground-truth atoms `{vᵢ} ∪ {A·vᵢ}` (plain atoms first).
pub fn echo_truth(dict: &FeatureDictionary, a: &SquareMatrix) -> Result<FeatureDictionary> {
    check_dim(dict.dim(), a.side())?;
    dict.concat(&dict.transformed(a.values())?)
}

/// Orthogonal `W` minimizing `Σ‖W·sᵢ − tᵢ‖²` over the columns of `sources`
/// and `targets`, from the SVD of the cross-covariance `T·Sᵀ`. Returns `W`
/// and the minimized sum of squares.
pub fn orthogonal_procrustes(sources: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<(SquareMatrix, f64)> {
    check_dim(sources.nrows(), targets.nrows())?;
    if sources.ncols() != targets.ncols() {
        return Err(Error::LengthMismatch {
            expected: sources.ncols(),
            got: targets.ncols(),
        });
    }
    if sources.ncols() == 0 || sources.nrows() == 0 {
        return Err(Error::InvalidParameter("procrustes needs at least one pair".into()));
    }
    let cross = targets * sources.transpose();
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let w = u * v_t;
    let residual = (&w * sources - targets).norm_squared();
    Ok((SquareMatrix::orthogonal(w)?, residual))
}

/// Linear map applied to outer products.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorProjection {
    /// Circular convolution, a dimension-preserving image of `xyᵀ`.
    Hrr,
    /// An `n × n²` matrix acting on the row-major flattening of `xyᵀ`.
    Matrix(DMatrix<f64>),
}

/// `π(x yᵀ)`.
pub fn project_outer(x: &Vector, y: &Vector, projection: &TensorProjection) -> Result<Vector> {
    check_dim(x.len(), y.len())?;
    match projection {
        TensorProjection::Hrr => bind_hrr(x, y),
        TensorProjection::Matrix(p) => {
            let n = x.len();
            check_dim(n * n, p.ncols())?;
            let mut out = Vector::zeros(p.nrows());
            for i in 0..n {
                for j in 0..n {
                    let w = x[i] * y[j];
                    if w != 0.0 {
                        out.axpy(w, &p.column(i * n + j), 1.0);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// `π(vᵢvⱼᵀ)` for every ordered `(i, j)`, row-major.
pub fn enumerate_tensor_features(dict: &FeatureDictionary, projection: &TensorProjection) -> Result<Vec<Vector>> {
    let atoms: Vec<Vector> = (0..dict.count()).map(|i| dict.atom(i).into_owned()).collect();
    let mut out = Vec::with_capacity(atoms.len() * atoms.len());
    for vi in &atoms {
        for vj in &atoms {
            out.push(project_outer(vi, vj, projection)?);
        }
    }
    Ok(out)
}

/// Summary of how learned atoms cover the `2m` echo ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub learned_atoms: usize,
    pub truth_atoms: usize,
    pub base_features: usize,
    /// Fraction of plain atoms `vᵢ` matched by some learned atom.
    pub plain_recovery: f64,
    /// Fraction of echoed atoms `A·vᵢ` matched by some learned atom.
    pub echo_recovery: f64,
    pub recovery_rate: f64,
    pub detected_pairs: usize,
    pub multiplicity_factor: f64,
    /// Fraction of truth atoms matched by a learned atom that sits in a detected pair.
    pub paired_truth_fraction: f64,
    /// Truth atoms (indices into the `2m` list) not covered by any detected pair.
    pub dark_atoms: Vec<usize>,
}

/// Tabulate recovery per side and list "dark" truth atoms. `matches` must
/// compare the learned atoms against the `2m` truth from [`echo_truth`]
/// built on `base_features` plain atoms.
pub fn multiplicity_report(matches: &MatchReport, echo: &EchoReport, base_features: usize) -> MultiplicityReport {
    let truth_atoms = 2 * base_features;
    let learned_atoms = matches.assignment.len() + matches.unmatched_learned.len();
    let side = |range: std::ops::Range<usize>| {
        let hits = matches.assignment.values().filter(|m| range.contains(&m.truth)).count();
        if range.is_empty() {
            0.0
        } else {
            hits as f64 / range.len() as f64
        }
    };
    let mut covered = vec![false; truth_atoms];
    for pair in &echo.pairs {
        for atom in [pair.source, pair.target] {
            if let Some(m) = matches.assignment.get(&atom) {
                if m.truth < truth_atoms {
                    covered[m.truth] = true;
                }
            }
        }
    }
    let dark_atoms: Vec<usize> = (0..truth_atoms).filter(|&t| !covered[t]).collect();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    MultiplicityReport {
        learned_atoms,
        truth_atoms,
        base_features,
        plain_recovery: side(0..base_features),
        echo_recovery: side(base_features..truth_atoms),
        recovery_rate: matches.recovery_rate,
        detected_pairs: echo.pairs.len(),
        multiplicity_factor: ratio(echo.pairs.len(), base_features),
        paired_truth_fraction: ratio(truth_atoms - dark_atoms.len(), truth_atoms),
        dark_atoms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::make_random_orthogonal;
    use crate::feature_space::{make_dictionary, DictionaryKind};

    #[test]
    fn zero_presence_gives_zero_samples() {
        let dict = make_dictionary(8, 4, DictionaryKind::GaussianNormalized, 1).unwrap();
        let a = make_random_orthogonal(8, 2).unwrap();
        let s = generate_pair_samples(&dict, &a, 10, 0.0, Amplitude::ConstantOne, 3).unwrap();
        assert!(s.z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn procrustes_rotation_example() {
        let s = DMatrix::identity(2, 2);
        let t = DMatrix::from_column_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (w, res) = orthogonal_procrustes(&s, &t).unwrap();
        assert!(res <= 1e-12);
        assert!((w.values() - &t).amax() <= 1e-12);
    }

    #[test]
    fn procrustes_identity_on_span() {
        let s = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let (w, res) = orthogonal_procrustes(&s, &s).unwrap();
        assert!(res <= 1e-20);
        assert!((w.values() * &s - &s).amax() <= 1e-12);
    }

    #[test]
    fn tensor_feature_count() {
        let dict = make_dictionary(8, 1, DictionaryKind::GaussianNormalized, 1).unwrap();
        assert_eq!(enumerate_tensor_features(&dict, &TensorProjection::Hrr).unwrap().len(), 1);
        let dict = make_dictionary(8, 5, DictionaryKind::GaussianNormalized, 1).unwrap();
        assert_eq!(enumerate_tensor_features(&dict, &TensorProjection::Hrr).unwrap().len(), 25);
    }

    #[test]
    fn identity_matrix_projection_is_flattening() {
        let x = Vector::from_column_slice(&[1.0, 2.0]);
        let y = Vector::from_column_slice(&[3.0, 4.0]);
        let p = TensorProjection::Matrix(DMatrix::identity(4, 4));
        assert_eq!(project_outer(&x, &y, &p).unwrap().as_slice(), &[3.0, 4.0, 6.0, 8.0]);
    }
}
