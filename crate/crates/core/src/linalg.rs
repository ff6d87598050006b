//! Small dense linear-algebra helpers shared across modules.
//!
//! Reductions here sum in ascending index order so results are
//! bit-reproducible independent of how callers are scheduled.

use nalgebra::DMatrix;
use rand::Rng;

use crate::rng::gaussian;
use crate::Vector;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalized(v: &Vector) -> Option<Vector> {
    let n = norm(v.as_slice());
    if n > 0.0 && n.is_finite() {
        Some(v / n)
    } else {
        None
    }
}

/// Matrix-vector product with ascending-index accumulation per output entry.
pub fn matvec(m: &DMatrix<f64>, x: &Vector) -> Vector {
    debug_assert_eq!(m.ncols(), x.len());
    let mut out = Vector::zeros(m.nrows());
    // column-major storage: accumulate column by column in ascending order
    for (j, xj) in x.iter().enumerate() {
        if *xj == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (o, c) in out.iter_mut().zip(col.iter()) {
            *o += c * xj;
        }
    }
    out
}

/// `mᵀ x` computed as per-column dot products.
pub fn matvec_t(m: &DMatrix<f64>, x: &Vector) -> Vector {
    debug_assert_eq!(m.nrows(), x.len());
    Vector::from_iterator(
        m.ncols(),
        (0..m.ncols()).map(|j| dot(m.column(j).as_slice(), x.as_slice())),
    )
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // drawn in column-major order
    let data: Vec<f64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of Q sign-corrected by the diagonal of R.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `‖MᵀM − I‖_max`.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    norm(m.as_slice())
}

/// Orthonormal basis for the column span of `m`, using modified Gram-Schmidt
/// and dropping columns whose remaining norm falls below `tol`.
pub fn orthonormal_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut basis: Vec<Vector> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: Vector = m.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b.as_slice(), v.as_slice());
                v -= b * c;
            }
        }
        let n = norm(v.as_slice());
        if n > tol {
            basis.push(v / n);
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}
