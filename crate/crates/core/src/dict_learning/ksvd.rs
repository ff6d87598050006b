//! K-SVD: alternate sparse coding with rank-1 refits of each atom.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::omp::batch_omp;
use super::{LearnMethod, LearnedDictionary, TrainingMeta};
use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsvdConfig {
    pub atoms: usize,
    /// Maximum support per sample.
    pub sparsity: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Power-iteration steps per atom refit, warm-started from the current atom.
    pub power_steps: usize,
    /// Pursuit stops once the residual falls below this fraction of `‖x‖`.
    pub residual_tolerance: f64,
}

impl Default for KsvdConfig {
    fn default() -> Self {
        Self {
            atoms: 64,
            sparsity: 8,
            iterations: 40,
            seed: 0,
            power_steps: 4,
            residual_tolerance: 1e-9,
        }
    }
}

type Code = Vec<(usize, f64)>;

fn column_norm_sq(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.norm_squared()).collect()
}

/// Cosine above which two normalized samples count as the same direction
/// during initialization.
const DENSE_COSINE: f64 = 0.9;
/// Candidates closer than this to an already chosen atom are skipped.
const DISTINCT_COSINE: f64 = 0.7;
/// Samples examined for repeated directions.
const DENSE_POOL: usize = 4096;

/// Initial atoms. Sparse data often contains many samples built from a single
/// feature, so directions that recur among the samples are taken first, most
/// frequent first. The rest come from distinct random nonzero samples, topped
/// up with Gaussian directions when there are too few.
fn initial_atoms(samples: &DMatrix<f64>, count: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, "dict_learning/ksvd-init");
    let mut order: Vec<usize> = (0..samples.ncols())
        .filter(|&i| samples.column(i).norm() > 0.0)
        .collect();
    order.shuffle(&mut rng);
    let pool_len = order.len().min(DENSE_POOL);
    let pool = DMatrix::from_columns(
        &order[..pool_len]
            .iter()
            .map(|&i| samples.column(i) / samples.column(i).norm())
            .collect::<Vec<_>>(),
    );
    let gram = pool.tr_mul(&pool);
    let mut support: Vec<(usize, usize)> = (0..pool_len)
        .map(|i| (gram.column(i).iter().filter(|c| c.abs() >= DENSE_COSINE).count(), i))
        .filter(|&(s, _)| s > 1)
        .collect();
    support.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut atoms: Vec<DVector<f64>> = Vec::with_capacity(count);
    let push_if_distinct = |atoms: &mut Vec<DVector<f64>>, c: DVector<f64>, limit: f64| {
        if atoms.len() < count && atoms.iter().all(|a| a.dot(&c).abs() < limit) {
            atoms.push(c);
        }
    };
    for &(_, i) in &support {
        push_if_distinct(&mut atoms, pool.column(i).into_owned(), DISTINCT_COSINE);
    }
    for &i in &order {
        let c = samples.column(i);
        push_if_distinct(&mut atoms, c / c.norm(), 1.0 - 1e-9);
    }
    let missing = count - atoms.len();
    if missing > 0 {
        let extra = gaussian_matrix(&mut rng, samples.nrows(), missing);
        atoms.extend(extra.column_iter().map(|c| c / c.norm()));
    }
    DMatrix::from_columns(&atoms)
}

/// Learn `cfg.atoms` unit atoms from the columns of `samples`.
///
/// The reported loss is `‖X − DΓ‖²_F / N`. It never increases: a sample keeps
/// its previous code when pursuit under the new dictionary does worse, and
/// each atom refit maximizes `‖Eᵀd‖` by power iteration started at the current
/// atom. Unused atoms are reseeded from the worst-reconstructed samples.
/// With `iterations = 0` the seeded initialization is returned.
pub fn fit_dictionary_ksvd(samples: &DMatrix<f64>, cfg: &KsvdConfig) -> Result<LearnedDictionary> {
    let n = samples.ncols();
    if cfg.atoms == 0 || cfg.sparsity == 0 {
        return Err(Error::InvalidParameter("atom count and sparsity must be positive".into()));
    }
    if n < cfg.atoms {
        return Err(Error::InsufficientAtoms {
            needed: cfg.atoms,
            have: n,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("samples contain non-finite values".into()));
    }
    if samples.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("every sample is zero".into()));
    }
    let mut d = initial_atoms(samples, cfg.atoms, cfg.seed);
    let sample_norm_sq = column_norm_sq(samples);
    let mut codes: Vec<Code> = vec![Vec::new(); n];
    let mut residual = samples.clone();
    let mut history = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        sparse_code_step(samples, &sample_norm_sq, &d, cfg, &mut codes, &mut residual);
        let users = atom_users(&codes, cfg.atoms);
        let mut unused = Vec::new();
        for j in 0..cfg.atoms {
            if users[j].is_empty() {
                unused.push(j);
            } else {
                update_atom(j, &users[j], cfg.power_steps, &mut d, &mut codes, &mut residual);
            }
        }
        reseed_unused(&unused, &mut d, &residual);
        history.push(residual.norm_squared() / n as f64);
    }

    let final_loss = match history.last() {
        Some(&l) => l,
        None => {
            let mut probe_codes = vec![Vec::new(); n];
            let mut probe_res = samples.clone();
            sparse_code_step(samples, &sample_norm_sq, &d, cfg, &mut probe_codes, &mut probe_res);
            probe_res.norm_squared() / n as f64
        }
    };
    let hyperparameters = BTreeMap::from([
        ("atoms".to_string(), cfg.atoms as f64),
        ("sparsity".to_string(), cfg.sparsity as f64),
        ("power-steps".to_string(), cfg.power_steps as f64),
        ("residual-tolerance".to_string(), cfg.residual_tolerance),
    ]);
    Ok(LearnedDictionary::new(
        d,
        TrainingMeta {
            method: LearnMethod::Ksvd,
            iterations: cfg.iterations,
            final_loss,
            seed: cfg.seed,
            loss_history: history,
            hyperparameters,
        },
    ))
}

/// Recode every sample in parallel; each sample's result depends only on its
/// own column, so the outcome is independent of the thread count.
fn sparse_code_step(
    samples: &DMatrix<f64>,
    sample_norm_sq: &[f64],
    d: &DMatrix<f64>,
    cfg: &KsvdConfig,
    codes: &mut [Code],
    residual: &mut DMatrix<f64>,
) {
    let gram = d.tr_mul(d);
    let dtx = d.tr_mul(samples);
    let updates: Vec<Option<(Code, DVector<f64>)>> = (0..samples.ncols())
        .into_par_iter()
        .map(|i| {
            let code = batch_omp(
                &gram,
                &dtx.column(i).into_owned(),
                sample_norm_sq[i],
                cfg.sparsity,
                cfg.residual_tolerance,
            );
            let mut r = samples.column(i).into_owned();
            for &(a, g) in &code {
                r.axpy(-g, &d.column(a), 1.0);
            }
            (r.norm_squared() < residual.column(i).norm_squared()).then_some((code, r))
        })
        .collect();
    for (i, update) in updates.into_iter().enumerate() {
        if let Some((code, r)) = update {
            codes[i] = code;
            residual.set_column(i, &r);
        }
    }
}

fn atom_users(codes: &[Code], atoms: usize) -> Vec<Vec<(usize, usize)>> {
    let mut users = vec![Vec::new(); atoms];
    for (i, code) in codes.iter().enumerate() {
        for (slot, &(a, _)) in code.iter().enumerate() {
            users[a].push((i, slot));
        }
    }
    users
}

fn update_atom(
    j: usize,
    users: &[(usize, usize)],
    power_steps: usize,
    d: &mut DMatrix<f64>,
    codes: &mut [Code],
    residual: &mut DMatrix<f64>,
) {
    let dim = d.nrows();
    let dj: DVector<f64> = d.column(j).into_owned();
    let mut e = DMatrix::zeros(dim, users.len());
    for (c, &(i, slot)) in users.iter().enumerate() {
        let g = codes[i][slot].1;
        let mut col = e.column_mut(c);
        col.copy_from(&residual.column(i));
        col.axpy(g, &dj, 1.0);
    }
    let mut u = dj;
    for _ in 0..power_steps {
        let next = &e * e.tr_mul(&u);
        let norm = next.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        u = next / norm;
    }
    let g_new = e.tr_mul(&u);
    for (c, &(i, slot)) in users.iter().enumerate() {
        codes[i][slot].1 = g_new[c];
        let mut col = residual.column_mut(i);
        col.copy_from(&e.column(c));
        col.axpy(-g_new[c], &u, 1.0);
    }
    d.set_column(j, &u);
}

fn reseed_unused(unused: &[usize], d: &mut DMatrix<f64>, residual: &DMatrix<f64>) {
    if unused.is_empty() {
        return;
    }
    let norms = column_norm_sq(residual);
    let mut order: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] > 0.0).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    for (&j, &i) in unused.iter().zip(&order) {
        let r = residual.column(i);
        d.set_column(j, &(r / r.norm()));
    }
}
