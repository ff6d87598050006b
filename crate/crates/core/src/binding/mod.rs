//! Single-vector composition mechanisms.
//!
//! Real-valued mechanisms: additive matrix binding `r = Ax + By`, slot binding
//! `r = x + Σ Aᵢyᵢ`, recursive tree binding `r_p = M₁c₁ + M₂c₂`, outer-product
//! binding `r = xyᵀ` and its circular-convolution projection (HRR). Binary
//! mechanism: `r = x ⊕ P(y)` over bit vectors.
//!
//! Binding never normalizes its output.

mod binary;
mod hrr;
mod tree;

pub use binary::{bind_binary, unbind_binary, BinaryVector, KnownSide, Permutation};
pub use hrr::{bind_hrr, unbind_hrr, HrrUnbind};
pub use tree::{bind_tree, ChildRole, TreeBinding, TreeSpec};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::feature_space::{readback, FeatureDictionary, SparseCode};
use crate::linalg::{gaussian_matrix, haar_orthogonal, matvec, matvec_t, norm, orthogonality_defect};
use crate::rng;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    Orthogonal,
    LowRank(usize),
    General,
}

/// An `n × n` real matrix tagged with its structural kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    values: DMatrix<f64>,
    kind: MatrixKind,
}

impl SquareMatrix {
    pub fn general(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "expected a non-empty square matrix, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        Ok(Self {
            values,
            kind: MatrixKind::General,
        })
    }

    /// Tag a matrix as orthogonal, checking `‖QᵀQ − I‖_max ≤ 1e−9`.
    pub fn orthogonal(values: DMatrix<f64>) -> Result<Self> {
        let mut m = Self::general(values)?;
        let defect = orthogonality_defect(&m.values);
        if defect > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "matrix is not orthogonal (defect {defect:e})"
            )));
        }
        m.kind = MatrixKind::Orthogonal;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            values: DMatrix::identity(n, n),
            kind: MatrixKind::Orthogonal,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: DMatrix::zeros(n, n),
            kind: MatrixKind::LowRank(0),
        }
    }

    pub fn side(&self) -> usize {
        self.values.nrows()
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.side(), x.len())?;
        Ok(matvec(&self.values, x))
    }

    pub fn apply_transpose(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.side(), x.len())?;
        Ok(matvec_t(&self.values, x))
    }

    pub fn transpose(&self) -> Self {
        Self {
            values: self.values.transpose(),
            kind: self.kind,
        }
    }
}

/// Haar-random orthogonal matrix.
pub fn make_random_orthogonal(dim: usize, seed: u64) -> Result<SquareMatrix> {
    if dim == 0 {
        return Err(Error::InvalidDimensions("dim must be positive".into()));
    }
    let mut rng = rng::stream(seed, "binding/orthogonal");
    Ok(SquareMatrix {
        values: haar_orthogonal(&mut rng, dim),
        kind: MatrixKind::Orthogonal,
    })
}

/// Product of `dim × rank` and `rank × dim` Gaussian factors scaled so σ₁ = 1.
pub fn make_low_rank(dim: usize, rank: usize, seed: u64) -> Result<SquareMatrix> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidRank { rank, dim });
    }
    let mut rng = rng::stream(seed, "binding/low-rank");
    let left = gaussian_matrix(&mut rng, dim, rank);
    let right = gaussian_matrix(&mut rng, rank, dim);
    let mut values = &left * &right;
    let sigma = values.clone().singular_values();
    let top = sigma.iter().cloned().fold(0.0_f64, f64::max);
    values.unscale_mut(top);
    Ok(SquareMatrix {
        values,
        kind: MatrixKind::LowRank(rank),
    })
}

/// Ordered-pair binding matrices `(A, B)` for `r = Ax + By`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditivePair {
    pub a: SquareMatrix,
    pub b: SquareMatrix,
}

impl AdditivePair {
    pub fn new(a: SquareMatrix, b: SquareMatrix) -> Result<Self> {
        check_dim(a.side(), b.side())?;
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.side()
    }
}

/// Tagged choice of composition mechanism.
#[derive(Debug, Clone, PartialEq)]
pub enum BindingSpec {
    AdditivePair(AdditivePair),
    Slots(Vec<SquareMatrix>),
    Tree(TreeBinding),
    OuterProduct { dim: usize },
    Hrr { dim: usize },
    Binary(Permutation),
}

impl BindingSpec {
    pub fn dim(&self) -> usize {
        match self {
            BindingSpec::AdditivePair(p) => p.dim(),
            BindingSpec::Slots(s) => s.first().map_or(0, SquareMatrix::side),
            BindingSpec::Tree(t) => t.dim(),
            BindingSpec::OuterProduct { dim } | BindingSpec::Hrr { dim } => *dim,
            BindingSpec::Binary(p) => p.len(),
        }
    }

    /// Check that every matrix is square with the common side.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        match self {
            BindingSpec::AdditivePair(p) => {
                check_dim(n, p.a.side())?;
                check_dim(n, p.b.side())
            }
            BindingSpec::Slots(s) => s.iter().try_for_each(|m| check_dim(n, m.side())),
            BindingSpec::Tree(t) => check_dim(t.m1.side(), t.m2.side()),
            BindingSpec::OuterProduct { .. } | BindingSpec::Hrr { .. } | BindingSpec::Binary(_) => {
                if n == 0 {
                    Err(Error::InvalidDimensions("dim must be positive".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

pub fn bind_pair_additive(pair: &AdditivePair, x: &Vector, y: &Vector) -> Result<Vector> {
    let ax = pair.a.apply(x)?;
    let by = pair.b.apply(y)?;
    Ok(ax + by)
}

/// `r = x + A₁y₁ + … + A_k y_k`, summed in list order.
pub fn bind_slots(x: &Vector, slots: &[(SquareMatrix, Vector)]) -> Result<Vector> {
    let mut r = x.clone();
    for (a, y) in slots {
        check_dim(x.len(), a.side())?;
        r += a.apply(y)?;
    }
    Ok(r)
}

/// Selective readback `⟨r, A vᵢ⟩` for every atom, computed as `⟨Aᵀr, vᵢ⟩`.
pub fn unbind_readback(r: &Vector, a: &SquareMatrix, dict: &FeatureDictionary) -> Result<SparseCode> {
    check_dim(dict.dim(), a.side())?;
    let pulled = a.apply_transpose(r)?;
    readback(dict, &pulled)
}

pub fn bind_outer(x: &Vector, y: &Vector) -> Result<SquareMatrix> {
    check_dim(x.len(), y.len())?;
    if x.is_empty() {
        return Err(Error::InvalidDimensions("empty vectors".into()));
    }
    SquareMatrix::general(x * y.transpose())
}

/// Recover `x` from `r = xyᵀ` as `r y / ‖y‖²`.
pub fn unbind_outer(r: &SquareMatrix, y: &Vector) -> Result<Vector> {
    check_dim(r.side(), y.len())?;
    let ny = norm(y.as_slice());
    if ny <= 1e-12 {
        return Err(Error::DegenerateCue(ny));
    }
    Ok(r.apply(y)? / (ny * ny))
}
