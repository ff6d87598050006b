//! Orthogonal matching pursuit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::feature_space::SparseCode;
use crate::Vector;

/// When to stop adding atoms. Pursuit also stops once the residual vanishes
/// or every atom is in the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmpStop {
    pub max_support: Option<usize>,
    /// Stop once the residual norm is at most this value.
    pub residual: Option<f64>,
}

impl OmpStop {
    pub fn support(k: usize) -> Self {
        Self {
            max_support: Some(k),
            residual: None,
        }
    }

    pub fn residual(eps: f64) -> Self {
        Self {
            max_support: None,
            residual: Some(eps),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OmpResult {
    pub code: SparseCode,
    /// Residual norm before the first selection and after each one.
    pub residual_norms: Vec<f64>,
}

/// Residuals below this fraction of `‖x‖` count as exact reconstruction.
const EXACT: f64 = 1e-12;

/// Incremental Cholesky factor of the Gram matrix restricted to the support.
struct SupportSystem {
    support: Vec<usize>,
    l: Vec<Vec<f64>>, // lower-triangular rows
}

impl SupportSystem {
    fn new() -> Self {
        Self {
            support: Vec::new(),
            l: Vec::new(),
        }
    }

    /// Extend the factor with atom `j`; `g_row[i]` is `⟨d_support[i], d_j⟩`.
    /// Returns false when the atom is numerically dependent on the support.
    fn push(&mut self, j: usize, g_row: &[f64], g_jj: f64) -> bool {
        let k = self.support.len();
        let mut w = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|c| self.l[i][c] * w[c]).sum();
            w[i] = (g_row[i] - s) / self.l[i][i];
        }
        let diag_sq = g_jj - w.iter().map(|v| v * v).sum::<f64>();
        if diag_sq <= 1e-12 * g_jj.max(1e-300) {
            return false;
        }
        w.push(diag_sq.sqrt());
        self.l.push(w);
        self.support.push(j);
        true
    }

    /// Solve `(L Lᵀ) γ = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.support.len();
        let mut y = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|c| self.l[i][c] * y[c]).sum();
            y[i] = (b[i] - s) / self.l[i][i];
        }
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|r| self.l[r][i] * x[r]).sum();
            x[i] = (y[i] - s) / self.l[i][i];
        }
        x
    }
}

fn argmax_abs(corr: &DVector<f64>, excluded: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in corr.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        let a = c.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best
}

/// Greedy pursuit over the columns of `atoms` (assumed unit norm). The
/// residual is recomputed explicitly after every least-squares refit.
pub fn omp_sparse_code(atoms: &DMatrix<f64>, x: &Vector, stop: &OmpStop) -> Result<OmpResult> {
    check_dim(atoms.nrows(), x.len())?;
    let m = atoms.ncols();
    let limit = stop.max_support.unwrap_or(m).min(m).min(atoms.nrows());
    let x_norm = x.norm();
    let mut residual = x.clone();
    let mut norms = vec![x_norm];
    let mut system = SupportSystem::new();
    let mut coef: Vec<f64> = Vec::new();
    let mut rejected: Vec<usize> = Vec::new();
    loop {
        let r = *norms.last().expect("non-empty");
        if system.support.len() >= limit || r <= EXACT * x_norm || r == 0.0 {
            break;
        }
        if stop.residual.is_some_and(|eps| r <= eps) {
            break;
        }
        let corr = atoms.tr_mul(&residual);
        let excluded: Vec<usize> = system.support.iter().chain(&rejected).copied().collect();
        let Some((j, c)) = argmax_abs(&corr, &excluded) else {
            break;
        };
        if c == 0.0 {
            break;
        }
        let dj = atoms.column(j);
        let g_row: Vec<f64> = system.support.iter().map(|&i| atoms.column(i).dot(&dj)).collect();
        if !system.push(j, &g_row, dj.norm_squared()) {
            rejected.push(j);
            continue;
        }
        let rhs: Vec<f64> = system.support.iter().map(|&i| atoms.column(i).dot(x)).collect();
        coef = system.solve(&rhs);
        residual = x.clone();
        for (&i, &g) in system.support.iter().zip(&coef) {
            residual.axpy(-g, &atoms.column(i), 1.0);
        }
        // A refit never increases the residual in exact arithmetic; clamp rounding noise.
        norms.push(residual.norm().min(r));
    }
    let code = SparseCode::from_entries(m, system.support.iter().copied().zip(coef))?;
    Ok(OmpResult {
        code,
        residual_norms: norms,
    })
}

/// Gram-based pursuit for many signals against one dictionary. Returns the
/// support with coefficients; the caller recomputes residuals if needed.
pub(crate) fn batch_omp(
    gram: &DMatrix<f64>,
    dtx: &DVector<f64>,
    x_norm_sq: f64,
    max_support: usize,
    rel_tol: f64,
) -> Vec<(usize, f64)> {
    let m = gram.ncols();
    let limit = max_support.min(m);
    let mut system = SupportSystem::new();
    let mut coef: Vec<f64> = Vec::new();
    let mut alpha = dtx.clone();
    let mut rejected: Vec<usize> = Vec::new();
    let floor = rel_tol * rel_tol * x_norm_sq;
    let mut err = x_norm_sq;
    while system.support.len() < limit && err > floor && x_norm_sq > 0.0 {
        let excluded: Vec<usize> = system.support.iter().chain(&rejected).copied().collect();
        let Some((j, c)) = argmax_abs(&alpha, &excluded) else {
            break;
        };
        if c == 0.0 {
            break;
        }
        let g_row: Vec<f64> = system.support.iter().map(|&i| gram[(i, j)]).collect();
        if !system.push(j, &g_row, gram[(j, j)]) {
            rejected.push(j);
            continue;
        }
        let rhs: Vec<f64> = system.support.iter().map(|&i| dtx[i]).collect();
        coef = system.solve(&rhs);
        // α = Dᵀx − G_S γ ;  ‖r‖² = ‖x‖² − γᵀ(Dᵀx)_S
        alpha = dtx.clone();
        for (&i, &g) in system.support.iter().zip(&coef) {
            alpha.axpy(-g, &gram.column(i), 1.0);
        }
        err = x_norm_sq - coef.iter().zip(&rhs).map(|(g, b)| g * b).sum::<f64>();
    }
    system.support.into_iter().zip(coef).collect()
}
