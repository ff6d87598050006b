//! Single-hidden-layer sparse autoencoder with hand-derived gradients.
//!
//! `h = relu(W_e x + b_e)`, `x̂ = W_d h + b_d`, and for a batch of `B` samples
//! `L = ‖X̂ − X‖²_F / (B·dim) + λ · Σ|h| / (B·width)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{LearnMethod, LearnedDictionary, TrainingMeta};
use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaeOptimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaeConfig {
    pub width: usize,
    pub l1_weight: f64,
    pub step: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: SaeOptimizer,
    /// Rescale decoder columns to unit norm after every step, so the sparsity
    /// penalty cannot be dodged by shrinking activations.
    pub normalize_decoder: bool,
}

impl Default for SaeConfig {
    fn default() -> Self {
        Self {
            width: 128,
            l1_weight: 1e-3,
            step: 1e-3,
            epochs: 200,
            batch: 256,
            seed: 0,
            optimizer: SaeOptimizer::Adam,
            normalize_decoder: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
}

/// Gradients with the same shapes as [`SaeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradients {
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
}

impl SaeGradients {
    fn slices(&self) -> [&[f64]; 4] {
        [
            self.w_enc.as_slice(),
            self.b_enc.as_slice(),
            self.w_dec.as_slice(),
            self.b_dec.as_slice(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w_enc.as_mut_slice(),
            self.b_enc.as_mut_slice(),
            self.w_dec.as_mut_slice(),
            self.b_dec.as_mut_slice(),
        ]
    }
}

impl SaeModel {
    /// Gaussian encoder scaled by `1/√dim`, decoder initialized to the
    /// column-normalized encoder transpose, zero biases.
    pub fn init(dim: usize, width: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "dict_learning/sae-init");
        let w_enc = gaussian_matrix(&mut rng, width, dim) / (dim as f64).sqrt();
        let mut w_dec = w_enc.transpose();
        normalize_columns(&mut w_dec);
        Self {
            w_enc,
            b_enc: DVector::zeros(width),
            w_dec,
            b_dec: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_dec.nrows()
    }

    pub fn width(&self) -> usize {
        self.w_dec.ncols()
    }

    fn pre_activations(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = &self.w_enc * x;
        for mut c in pre.column_iter_mut() {
            c += &self.b_enc;
        }
        pre
    }

    pub fn encode(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.pre_activations(x).map(|v| v.max(0.0))
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.w_dec * self.encode(x);
        for mut c in out.column_iter_mut() {
            c += &self.b_dec;
        }
        out
    }

    /// Batch loss (`x` holds samples as columns).
    pub fn loss(&self, x: &DMatrix<f64>, l1_weight: f64) -> f64 {
        self.loss_and_gradients(x, l1_weight).0
    }

    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, l1_weight: f64) -> (f64, SaeGradients) {
        let b = x.ncols().max(1) as f64;
        let (dim, width) = (self.dim() as f64, self.width() as f64);
        let pre = self.pre_activations(x);
        let h = pre.map(|v| v.max(0.0));
        let mut err = &self.w_dec * &h - x;
        for mut c in err.column_iter_mut() {
            c += &self.b_dec;
        }
        let loss = err.norm_squared() / (b * dim) + l1_weight * h.sum() / (b * width);

        let gx = err * (2.0 / (b * dim));
        let w_dec = &gx * h.transpose();
        let b_dec = gx.column_sum();
        let mut dh = self.w_dec.tr_mul(&gx);
        let l1_term = l1_weight / (b * width);
        dh.zip_apply(&pre, |g, p| {
            *g = if p > 0.0 { *g + l1_term } else { 0.0 };
        });
        let w_enc = &dh * x.transpose();
        let b_enc = dh.column_sum();
        (
            loss,
            SaeGradients {
                w_enc,
                b_enc,
                w_dec,
                b_dec,
            },
        )
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w_enc.as_mut_slice(),
            self.b_enc.as_mut_slice(),
            self.w_dec.as_mut_slice(),
            self.b_dec.as_mut_slice(),
        ]
    }
}

fn normalize_columns(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &SaeModel) -> Self {
        let sizes = [
            model.w_enc.len(),
            model.b_enc.len(),
            model.w_dec.len(),
            model.b_dec.len(),
        ];
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut SaeModel, grads: &SaeGradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (k, (p, g)) in model.params_mut().into_iter().zip(grads.slices()).enumerate() {
            for (i, (p, g)) in p.iter_mut().zip(g).enumerate() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trained autoencoder with the mean batch loss of each epoch.
#[derive(Debug, Clone)]
pub struct SaeFit {
    pub model: SaeModel,
    pub epoch_losses: Vec<f64>,
}

fn validate(samples: &DMatrix<f64>, cfg: &SaeConfig) -> Result<()> {
    if cfg.width == 0 || cfg.batch == 0 {
        return Err(Error::InvalidParameter("width and batch size must be positive".into()));
    }
    if !(cfg.step > 0.0) || !cfg.step.is_finite() || !(cfg.l1_weight >= 0.0) {
        return Err(Error::InvalidParameter(
            "step must be positive and l1 weight nonnegative".into(),
        ));
    }
    if samples.nrows() == 0 || samples.ncols() == 0 {
        return Err(Error::DegenerateData("no samples".into()));
    }
    Ok(())
}

pub fn train_sae(samples: &DMatrix<f64>, cfg: &SaeConfig) -> Result<SaeFit> {
    validate(samples, cfg)?;
    let (dim, n) = samples.shape();
    let mut model = SaeModel::init(dim, cfg.width, cfg.seed);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::substream(cfg.seed, "dict_learning/sae-epoch", epoch as u64));
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let x = samples.select_columns(chunk);
            let (loss, grads) = model.loss_and_gradients(&x, cfg.l1_weight);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("sae loss became {loss} in epoch {epoch}")));
            }
            total += loss;
            batches += 1;
            match cfg.optimizer {
                SaeOptimizer::Adam => adam.step(&mut model, &grads, cfg.step),
                SaeOptimizer::Sgd => {
                    for (p, g) in model.params_mut().into_iter().zip(grads.slices()) {
                        p.iter_mut().zip(g).for_each(|(p, g)| *p -= cfg.step * g);
                    }
                }
            }
            if cfg.normalize_decoder {
                normalize_columns(&mut model.w_dec);
            }
        }
        epoch_losses.push(total / batches as f64);
    }
    Ok(SaeFit { model, epoch_losses })
}

/// Train an autoencoder and report its normalized decoder columns as atoms.
pub fn fit_dictionary_sae(samples: &DMatrix<f64>, cfg: &SaeConfig) -> Result<LearnedDictionary> {
    let fit = train_sae(samples, cfg)?;
    let final_loss = fit.model.loss(samples, cfg.l1_weight);
    let hyperparameters = BTreeMap::from([
        ("width".to_string(), cfg.width as f64),
        ("l1-weight".to_string(), cfg.l1_weight),
        ("step".to_string(), cfg.step),
        ("batch".to_string(), cfg.batch as f64),
    ]);
    Ok(LearnedDictionary::new(
        fit.model.w_dec.clone(),
        TrainingMeta {
            method: LearnMethod::Sae,
            iterations: cfg.epochs,
            final_loss,
            seed: cfg.seed,
            loss_history: fit.epoch_losses,
            hyperparameters,
        },
    ))
}

/// Pre-activations closer to zero than this are avoided when building the
/// check instance, so finite differences never straddle a ReLU kink.
const KINK_MARGIN: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors of near-zero gradient entries.
const REL_FLOOR: f64 = 1e-6;

/// Compare analytic gradients with central differences on a small random
/// instance (dim 6, 5 samples); returns the maximum relative error.
pub fn sae_gradient_check(width: usize, l1_weight: f64, seed: u64) -> f64 {
    sae_gradient_check_with(width, l1_weight, seed, |_| {})
}

/// Like [`sae_gradient_check`], but `perturb` may alter the analytic
/// gradients before comparison (negative controls).
pub fn sae_gradient_check_with(
    width: usize,
    l1_weight: f64,
    seed: u64,
    perturb: impl FnOnce(&mut SaeGradients),
) -> f64 {
    let dim = 6;
    let width = width.clamp(1, 16);
    let (model, x) = (0u64..)
        .map(|attempt| {
            let mut rng = rng::substream(seed, "dict_learning/sae-check", attempt);
            let mut model = SaeModel::init(dim, width, rng::derive_seed(seed, &format!("check#{attempt}")));
            model.b_enc = crate::rng::gaussian_vector(&mut rng, width) * 0.1;
            model.b_dec = crate::rng::gaussian_vector(&mut rng, dim) * 0.1;
            let x = gaussian_matrix(&mut rng, dim, 5);
            (model, x)
        })
        .find(|(m, x)| m.pre_activations(x).iter().all(|p| p.abs() > KINK_MARGIN))
        .expect("some draw avoids every kink");
    let (_, mut grads) = model.loss_and_gradients(&x, l1_weight);
    perturb(&mut grads);
    let mut worst = 0.0f64;
    for (k, analytic) in grads.slices().into_iter().enumerate() {
        for (i, &a) in analytic.iter().enumerate() {
            let shifted = |delta: f64| {
                let mut m = model.clone();
                m.params_mut()[k][i] += delta;
                m.loss(&x, l1_weight)
            };
            let fd = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}
