//! Readback quality as a function of dimension, feature count, number of
//! write channels, matrix rank and sparsity.
//!
//! Every mechanism writes `k` sparse codes through `k` linear channels,
//! `r = Σⱼ Aⱼ·encode(yⱼ)`, and reads channel `j` back as `⟨r, Aⱼvᵢ⟩`. The
//! mechanisms differ only in how the channel matrices are drawn. Writing
//! `x + Σ Aⱼyⱼ` is the same experiment up to a global rotation, which leaves
//! every readback error unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binding::{make_low_rank, make_random_orthogonal};
use crate::error::{Error, Result};
use crate::feature_space::{check_probability, make_dictionary, sample_code_with, Amplitude, DictionaryKind};
use crate::rng;

/// How the channel matrices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Haar-random orthogonal matrices.
    Slots,
    /// Product of Gaussian factors of the given rank, top singular value 1.
    LowRank,
    /// `R·P` with `P` the projector onto the span of `rank` randomly chosen
    /// atoms and `R` Haar-random: the chosen atoms keep unit norm, the rest
    /// shrink to about `√(rank/n)`.
    AlignedLowRank,
    /// Circulant matrices of Gaussian cue vectors with variance `1/n`, i.e.
    /// circular-convolution binding read back by correlation.
    Hrr,
}

impl Mechanism {
    pub fn uses_rank(self) -> bool {
        matches!(self, Mechanism::LowRank | Mechanism::AlignedLowRank)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Slots => "slots",
            Mechanism::LowRank => "low-rank",
            Mechanism::AlignedLowRank => "aligned-low-rank",
            Mechanism::Hrr => "hrr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchGrid {
    pub mechanisms: Vec<Mechanism>,
    pub dims: Vec<usize>,
    pub features: Vec<usize>,
    pub slots: Vec<usize>,
    /// Only used by rank-aware mechanisms; the others report `rank = n`.
    pub ranks: Vec<usize>,
    pub presence: Vec<f64>,
    pub seed_count: usize,
    pub samples_per_cell: usize,
    pub dictionary: DictionaryKind,
    pub active_threshold: f64,
    /// Atoms with `‖Aⱼvᵢ‖` at least this form the strong stratum for recall.
    pub strong_norm: f64,
    pub seed: u64,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            mechanisms: vec![Mechanism::Slots, Mechanism::AlignedLowRank],
            dims: vec![256],
            features: vec![128, 256, 512],
            slots: vec![1, 2, 4, 8],
            ranks: vec![32, 64, 256],
            presence: vec![1.0 / 32.0],
            seed_count: 20,
            samples_per_cell: 40,
            dictionary: DictionaryKind::GaussianNormalized,
            active_threshold: 0.5,
            strong_norm: 0.9,
            seed: 0,
        }
    }
}

impl BenchGrid {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("mechanisms", self.mechanisms.len()),
            ("dims", self.dims.len()),
            ("features", self.features.len()),
            ("slots", self.slots.len()),
            ("presence", self.presence.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, len)| *len == 0) {
            return Err(Error::InvalidParameter(format!("grid list `{name}` is empty")));
        }
        if self.mechanisms.iter().any(|m| m.uses_rank()) && self.ranks.is_empty() {
            return Err(Error::InvalidParameter("grid list `ranks` is empty".into()));
        }
        if self.seed_count == 0 || self.samples_per_cell == 0 {
            return Err(Error::InvalidParameter("seed count and samples per cell must be positive".into()));
        }
        self.presence.iter().try_for_each(|&p| check_probability(p))?;
        Ok(())
    }

    /// Cells in output order: mechanism, n, m, k, rank, p, each ascending
    /// through its list.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut out = Vec::new();
        for &mechanism in &self.mechanisms {
            for &n in &self.dims {
                for &m in &self.features {
                    for &k in &self.slots {
                        let ranks = if mechanism.uses_rank() { self.ranks.clone() } else { vec![n] };
                        for rank in ranks {
                            for &p in &self.presence {
                                out.push(CellParams { mechanism, n, m, k, rank, p });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seed_count)
            .map(|i| rng::derive_seed(self.seed, &format!("capacity_bench/seed#{i}")))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub mechanism: Mechanism,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rank: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub seed_count: usize,
    /// Mean over seeds of the per-seed mean absolute coefficient error.
    pub mae_mean: f64,
    /// Standard deviation of the per-seed MAE.
    pub mae_std: f64,
    pub precision: f64,
    pub recall: f64,
    /// Recall over active coefficients whose channel image has norm at least
    /// `strong_norm`; `None` when that stratum is empty.
    pub strong_recall: Option<f64>,
    /// `√(Σ‖r‖² / Σ‖encode(y₁)‖²)`: bound-vector size relative to one constituent.
    pub norm_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub params: CellParams,
    pub metrics: Option<CellMetrics>,
    /// Why the cell failed, when it did.
    pub error: Option<String>,
}

#[derive(Default)]
struct Tally {
    abs_error: f64,
    coefficients: usize,
    true_pos: usize,
    predicted: usize,
    actual: usize,
    strong_hits: usize,
    strong_actual: usize,
    bound_sq: f64,
    first_sq: f64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.abs_error += o.abs_error;
        self.coefficients += o.coefficients;
        self.true_pos += o.true_pos;
        self.predicted += o.predicted;
        self.actual += o.actual;
        self.strong_hits += o.strong_hits;
        self.strong_actual += o.strong_actual;
        self.bound_sq += o.bound_sq;
        self.first_sq += o.first_sq;
    }
}

/// Channel images `Aⱼ·V` for one seed; draws depend on `(seed, n, m, j)` and
/// the rank, not on `k`, so cells that differ only in `k` share channels.
fn channel_images(cell: &CellParams, seed: u64, v: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let n = cell.n;
    (0..cell.k)
        .map(|j| {
            let label = format!("capacity_bench/channel#{}#{n}#{j}", cell.mechanism.name());
            let s = rng::derive_seed(seed, &label);
            let a = match cell.mechanism {
                Mechanism::Slots => make_random_orthogonal(n, s)?.into_values(),
                Mechanism::LowRank => make_low_rank(n, cell.rank, s)?.into_values(),
                Mechanism::AlignedLowRank => aligned_low_rank(v, cell.rank, s)?,
                Mechanism::Hrr => circulant_cue(n, s),
            };
            Ok(a * v)
        })
        .collect()
}

fn aligned_low_rank(v: &DMatrix<f64>, rank: usize, seed: u64) -> Result<DMatrix<f64>> {
    let (n, m) = v.shape();
    if rank == 0 || rank > n {
        return Err(Error::InvalidRank { rank, dim: n });
    }
    let mut rng = rng::stream(seed, "capacity_bench/aligned-subset");
    let mut order: Vec<usize> = (0..m).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    order.truncate(rank.min(m));
    let basis = crate::linalg::orthonormal_basis(&v.select_columns(&order), 1e-10);
    let projector = &basis * basis.transpose();
    let rotation = make_random_orthogonal(n, rng::derive_seed(seed, "capacity_bench/aligned-rotation"))?;
    Ok(rotation.values() * projector)
}

/// Matrix of `y ↦ c ⊛ y` for a Gaussian cue `c` with entries of variance `1/n`.
fn circulant_cue(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, "capacity_bench/hrr-cue");
    let c = rng::gaussian_vector(&mut r, n) / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, k| c[(i + n - k) % n])
}

fn run_seed(grid: &BenchGrid, cell: &CellParams, seed: u64) -> Result<Tally> {
    let dict_seed = rng::derive_seed(seed, &format!("capacity_bench/dictionary#{}#{}", cell.n, cell.m));
    let dict = make_dictionary(cell.n, cell.m, grid.dictionary, dict_seed)?;
    let images = channel_images(cell, seed, dict.atoms())?;
    let image_norms: Vec<Vec<f64>> = images
        .iter()
        .map(|im| im.column_iter().map(|c| c.norm()).collect())
        .collect();
    let mut t = Tally::default();
    for s in 0..grid.samples_per_cell {
        let mut rng = rng::substream(seed, &format!("capacity_bench/codes#{}", cell.m), s as u64);
        let codes = (0..cell.k)
            .map(|_| sample_code_with(cell.m, cell.p, Amplitude::ConstantOne, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mut r = nalgebra::DVector::zeros(cell.n);
        for (im, code) in images.iter().zip(&codes) {
            for (i, a) in code.iter() {
                r.axpy(a, &im.column(i), 1.0);
            }
        }
        t.bound_sq += r.norm_squared();
        let first = crate::feature_space::encode(&dict, &codes[0])?;
        t.first_sq += first.norm_squared();
        for ((im, code), norms) in images.iter().zip(&codes).zip(&image_norms) {
            let est = im.tr_mul(&r);
            for i in 0..cell.m {
                let truth = code.get(i);
                let e = est[i];
                t.abs_error += (truth - e).abs();
                let is_true = truth != 0.0;
                let is_pred = e.abs() >= grid.active_threshold;
                t.actual += usize::from(is_true);
                t.predicted += usize::from(is_pred);
                t.true_pos += usize::from(is_true && is_pred);
                if is_true && norms[i] >= grid.strong_norm {
                    t.strong_actual += 1;
                    t.strong_hits += usize::from(is_pred);
                }
            }
            t.coefficients += cell.m;
        }
    }
    Ok(t)
}

fn run_cell(grid: &BenchGrid, cell: &CellParams, seeds: &[u64]) -> Result<CellMetrics> {
    if cell.k == 0 || cell.n == 0 || cell.m == 0 {
        return Err(Error::InvalidParameter("n, m and k must be positive".into()));
    }
    let tallies = seeds
        .iter()
        .map(|&s| run_seed(grid, cell, s))
        .collect::<Result<Vec<_>>>()?;
    let maes: Vec<f64> = tallies.iter().map(|t| t.abs_error / t.coefficients as f64).collect();
    let mut total = Tally::default();
    for t in &tallies {
        total.merge(t);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok(CellMetrics {
        seed_count: seeds.len(),
        mae_mean: crate::stats::mean(&maes),
        mae_std: crate::stats::std_dev(&maes),
        precision: ratio(total.true_pos, total.predicted),
        recall: ratio(total.true_pos, total.actual),
        strong_recall: (total.strong_actual > 0).then(|| ratio(total.strong_hits, total.strong_actual)),
        norm_growth: if total.first_sq > 0.0 {
            (total.bound_sq / total.first_sq).sqrt()
        } else {
            0.0
        },
    })
}

/// Run every cell. Cells are independent and run in parallel; a failing cell
/// records its error instead of aborting the sweep.
pub fn run_capacity(grid: &BenchGrid) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let seeds = grid.seeds();
    Ok(grid
        .cells()
        .par_iter()
        .map(|cell| match run_cell(grid, cell, &seeds) {
            Ok(m) => CellResult {
                params: *cell,
                metrics: Some(m),
                error: None,
            },
            Err(e) => CellResult {
                params: *cell,
                metrics: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

pub const CSV_HEADER: &str = "mechanism,n,m,k,rank,p,seed-count,mae-mean,mae-std,precision,recall,norm-growth";

/// One row per cell in cell order; a failed cell leaves its metric fields empty.
pub fn capacity_csv(table: &[CellResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in table {
        let p = &c.params;
        let _ = write!(out, "{},{},{},{},{},{}", p.mechanism.name(), p.n, p.m, p.k, p.rank, p.p);
        match &c.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{},{}",
                    m.seed_count, m.mae_mean, m.mae_std, m.precision, m.recall, m.norm_growth
                );
            }
            None => out.push_str(",,,,,,\n"),
        }
    }
    out
}

/// Seed-averaged MAE along one axis with every other parameter fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    /// `"k"` or `"m"`.
    pub axis: String,
    pub mechanism: Mechanism,
    pub n: usize,
    /// The fixed value of whichever of `m`/`k` is not the axis.
    pub fixed: usize,
    pub rank: usize,
    pub p: f64,
    /// `(axis value, mae-mean)` ascending in the axis value.
    pub series: Vec<(usize, f64)>,
    pub non_decreasing: bool,
}

/// Overall versus strong-stratum recall for a rank-aware cell below full rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedCheck {
    pub params: CellParams,
    pub recall: f64,
    pub strong_recall: Option<f64>,
    /// `strong_recall > recall`, or `None` when no atom reaches the strong stratum.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub cells: usize,
    pub failed_cells: Vec<(CellParams, String)>,
    pub monotonicity: Vec<MonotonicityCheck>,
    pub stratified: Vec<StratifiedCheck>,
    pub strong_recall: Vec<(CellParams, Option<f64>)>,
    pub all_monotone_in_k: bool,
    /// Every stratified check with a nonempty strong stratum holds, and at
    /// least one such check exists.
    pub all_stratified_hold: bool,
}

/// Non-decreasing in the mean, with no tolerance.
pub fn is_non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] >= w[0])
}

fn series_checks(table: &[CellResult], axis: &str) -> Vec<MonotonicityCheck> {
    type Key = (Mechanism, usize, usize, usize, u64);
    let mut groups: BTreeMap<Key, Vec<(usize, f64)>> = BTreeMap::new();
    for c in table {
        let Some(m) = &c.metrics else { continue };
        let p = &c.params;
        let (fixed, x) = if axis == "k" { (p.m, p.k) } else { (p.k, p.m) };
        groups
            .entry((p.mechanism, p.n, fixed, p.rank, p.p.to_bits()))
            .or_default()
            .push((x, m.mae_mean));
    }
    groups
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|((mechanism, n, fixed, rank, p), mut series)| {
            series.sort_by_key(|&(x, _)| x);
            let values: Vec<f64> = series.iter().map(|&(_, v)| v).collect();
            MonotonicityCheck {
                axis: axis.to_string(),
                mechanism,
                n,
                fixed,
                rank,
                p: f64::from_bits(p),
                non_decreasing: is_non_decreasing(&values),
                series,
            }
        })
        .collect()
}

pub fn summarize(table: &[CellResult]) -> Result<CapacitySummary> {
    if table.is_empty() {
        return Err(Error::InvalidParameter("empty capacity table".into()));
    }
    let mut monotonicity = series_checks(table, "k");
    monotonicity.extend(series_checks(table, "m"));
    let stratified: Vec<StratifiedCheck> = table
        .iter()
        .filter(|c| c.params.mechanism.uses_rank() && c.params.rank < c.params.n)
        .filter_map(|c| {
            c.metrics.map(|m| StratifiedCheck {
                params: c.params,
                recall: m.recall,
                strong_recall: m.strong_recall,
                holds: m.strong_recall.map(|s| s > m.recall),
            })
        })
        .collect();
    Ok(CapacitySummary {
        cells: table.len(),
        failed_cells: table
            .iter()
            .filter_map(|c| c.error.clone().map(|e| (c.params, e)))
            .collect(),
        all_monotone_in_k: monotonicity.iter().filter(|c| c.axis == "k").all(|c| c.non_decreasing),
        all_stratified_hold: stratified.iter().any(|s| s.holds.is_some())
            && stratified.iter().all(|s| s.holds != Some(false)),
        strong_recall: table
            .iter()
            .filter_map(|c| c.metrics.map(|m| (c.params, m.strong_recall)))
            .collect(),
        monotonicity,
        stratified,
    })
}

/// Write `capacity.csv` and `capacity-summary.json` into `dir`.
pub fn write_summary(table: &[CellResult], dir: &Path) -> Result<CapacitySummary> {
    let summary = summarize(table)?;
    let csv_path = dir.join("capacity.csv");
    std::fs::write(&csv_path, capacity_csv(table)).map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join("capacity-summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(summary)
}
