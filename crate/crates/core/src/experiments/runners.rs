//! One function per experiment tag. Every random choice is drawn from a
//! stream derived from the master seed; seeds inside parameter sub-blocks
//! (`ksvd.seed`, `detect.seed`, ...) are mixed into those derivations rather
//! than used directly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{BindParams, DiffsParams, EchoParams, GenParams, LearnParams, Params, ProbeParams, SteerParams};
use super::plot;
use super::{format, ArtifactWriter, ExperimentConfig};
use crate::binding::{
    bind_binary, bind_hrr, bind_outer, make_random_orthogonal, unbind_binary, unbind_hrr, unbind_outer,
    unbind_readback, BinaryVector, HrrUnbind, KnownSide, Permutation, TreeSpec,
};
use crate::capacity_bench::{capacity_csv, run_capacity, summarize, BenchGrid};
use crate::dict_learning::{
    fit_dictionary_ksvd, fit_dictionary_sae, match_atoms, match_columns, LearnMethod, LearnedDictionary,
    MatchReport,
};
use crate::echo_analysis::{
    detect_echo_pairs, echo_truth, generate_pair_samples, multiplicity_report, EchoPair, EchoReport,
    MultiplicityReport,
};
use crate::error::{Error, Result};
use crate::feature_space::{
    encode, make_dictionary, readback, readback_error, sample_code_with, DictionaryKind, FeatureDictionary,
};
use crate::relational::{
    embed_tree_pythagorean, fit_structural_probe, planted_relation_sequences, probe_spearman, token_differences,
    tree_distance, LabeledSequence, PairPolicy, TokenSequence,
};
use crate::rng::{derive_seed, gaussian_vector, stream, substream};
use crate::stats::mean;
use crate::steering_lab::{generate_labeled, make_scenario, steering_sweep, SweepResult};

pub(crate) type Headline = BTreeMap<String, f64>;

fn salted(seed: u64, label: &str, block_seed: u64) -> u64 {
    derive_seed(seed, &format!("{label}#{block_seed}"))
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn headline<const N: usize>(entries: [(&str, f64); N]) -> Headline {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Renders an optional number as an empty CSV field when absent.
fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn dispatch(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Headline> {
    let seed = cfg.seed;
    match &cfg.params {
        Params::Gen(p) => gen(p, seed, w),
        Params::Bind(p) => bind(p, seed, w),
        Params::Learn(p) => learn(p, seed, w),
        Params::Echo(p) => echo(p, seed, w),
        Params::Steer(p) => steer(p, seed, w),
        Params::Bench(p) => bench(p, seed, w),
        Params::Probe(p) => probe(p, seed, w),
        Params::Diffs(p) => diffs(p, seed, w),
    }
}

/// Samples `x = encode(a)` as columns, with their codes.
fn synthetic_samples(
    dict: &FeatureDictionary,
    count: usize,
    presence: f64,
    amplitude: crate::feature_space::Amplitude,
    seed: u64,
    label: &str,
) -> Result<(DMatrix<f64>, Vec<crate::feature_space::SparseCode>)> {
    let mut samples = DMatrix::zeros(dict.dim(), count);
    let mut codes = Vec::with_capacity(count);
    for k in 0..count {
        let code = sample_code_with(dict.count(), presence, amplitude, &mut substream(seed, label, k as u64))?;
        samples.set_column(k, &encode(dict, &code)?);
        codes.push(code);
    }
    Ok((samples, codes))
}

#[derive(Serialize)]
struct GenReport {
    samples: usize,
    coherence: f64,
    mean_support: f64,
    mean_max_abs_error: f64,
    worst_max_abs_error: f64,
    mean_precision: f64,
    mean_recall: f64,
    /// Samples whose readback error exceeds `coherence · ‖a‖₁`.
    coherence_bound_violations: usize,
}

fn gen(p: &GenParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let dict = make_dictionary(p.dim, p.features, p.dictionary, derive_seed(seed, "gen/dictionary"))?;
    let (samples, codes) = synthetic_samples(&dict, p.sample_count, p.presence, p.amplitude, seed, "gen/code")?;
    let mu = dict.coherence();
    let (mut max_err, mut precision, mut recall) = (Vec::new(), Vec::new(), Vec::new());
    let mut violations = 0;
    for (k, code) in codes.iter().enumerate() {
        let est = readback(&dict, &samples.column(k).into_owned())?;
        let m = readback_error(code, &est, p.active_threshold)?;
        let l1 = code.l1_norm();
        if m.max_abs_error > mu * l1 + 1e-12 * (1.0 + l1) {
            violations += 1;
        }
        max_err.push(m.max_abs_error);
        precision.push(m.precision);
        recall.push(m.recall);
    }
    let report = GenReport {
        samples: p.sample_count,
        coherence: mu,
        mean_support: codes.iter().map(|c| c.support_len() as f64).sum::<f64>() / codes.len() as f64,
        mean_max_abs_error: mean(&max_err),
        worst_max_abs_error: max_err.iter().copied().fold(0.0, f64::max),
        mean_precision: mean(&precision),
        mean_recall: mean(&recall),
        coherence_bound_violations: violations,
    };
    w.put_matrix("dictionary.mat1", dict.atoms())?;
    w.put_matrix("samples.mat1", &samples)?;
    w.put_json("gen-report.json", &report)?;
    Ok(headline([
        ("coherence", report.coherence),
        ("mean_max_abs_error", report.mean_max_abs_error),
        ("mean_recall", report.mean_recall),
        ("coherence_bound_violations", violations as f64),
    ]))
}

#[derive(Serialize, Default)]
struct BindReport {
    trials: usize,
    outer_max_error: f64,
    hrr_exact_max_error: f64,
    binary_failures: usize,
    orthogonal_readback_max_error: f64,
    tree_identity_max_error: f64,
}

fn bind(p: &BindParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let mut report = BindReport {
        trials: p.trials,
        ..Default::default()
    };
    for t in 0..p.trials as u64 {
        let mut rng = substream(seed, "bind/trial", t);
        let x = gaussian_vector(&mut rng, p.dim);
        let y = gaussian_vector(&mut rng, p.dim);

        let r = bind_outer(&x, &y)?;
        report.outer_max_error = report.outer_max_error.max((unbind_outer(&r, &y)? - &x).amax());

        let r = bind_hrr(&x, &y)?;
        let back = unbind_hrr(&r, &y, HrrUnbind::ExactSpectral)?;
        report.hrr_exact_max_error = report.hrr_exact_max_error.max((back - &x).amax());

        let bx = BinaryVector::random(p.bits, &mut rng);
        let by = BinaryVector::random(p.bits, &mut rng);
        let perm = Permutation::random(p.bits, &mut rng);
        let bound = bind_binary(&bx, &by, &perm)?;
        let ok = unbind_binary(&bound, &bx, KnownSide::First, &perm)? == by
            && unbind_binary(&bound, &by, KnownSide::Second, &perm)? == bx;
        report.binary_failures += usize::from(!ok);
        if t == 0 {
            w.put("binary-x.bvec", format::bits_to_string(&bx))?;
            w.put("binary-y.bvec", format::bits_to_string(&by))?;
            w.put("binary-bound.bvec", format::bits_to_string(&bound))?;
        }

        let count = (p.dim / 2).max(1);
        let dict = make_dictionary(p.dim, count, DictionaryKind::OrthogonalSubset, salted(seed, "bind/dictionary", t))?;
        let a = make_random_orthogonal(p.dim, salted(seed, "bind/orthogonal", t))?;
        let code = sample_code_with(count, 0.2, Default::default(), &mut rng)?;
        let r = a.apply(&encode(&dict, &code)?)?;
        let est = unbind_readback(&r, &a, &dict)?;
        let err = (0..count).map(|i| (est.get(i) - code.get(i)).abs()).fold(0.0, f64::max);
        report.orthogonal_readback_max_error = report.orthogonal_readback_max_error.max(err);

        let tree = TreeSpec::random(p.tree_nodes, &mut rng);
        let seq = embed_tree_pythagorean(&tree, p.dim, salted(seed, "bind/tree", t))?;
        for i in 0..tree.node_count() {
            for j in 0..i {
                let d = tree_distance(&tree, i, j)? as f64;
                let sq = (&seq.tokens()[i] - &seq.tokens()[j]).norm_squared();
                report.tree_identity_max_error = report.tree_identity_max_error.max((sq - d).abs());
            }
        }
    }
    w.put_json("bind-report.json", &report)?;
    Ok(headline([
        ("outer_max_error", report.outer_max_error),
        ("hrr_exact_max_error", report.hrr_exact_max_error),
        ("binary_failures", report.binary_failures as f64),
        ("orthogonal_readback_max_error", report.orthogonal_readback_max_error),
        ("tree_identity_max_error", report.tree_identity_max_error),
    ]))
}

fn learn(p: &LearnParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let (samples, truth) = match &p.samples_path {
        Some(path) => {
            let truth = p.truth_path.as_deref().map(format::load_matrix).transpose()?;
            (format::load_matrix(path)?, truth)
        }
        None => {
            let dict = make_dictionary(p.dim, p.features, p.dictionary, derive_seed(seed, "learn/dictionary"))?;
            let (samples, _) = synthetic_samples(&dict, p.sample_count, p.presence, p.amplitude, seed, "learn/code")?;
            w.put_matrix("dictionary.mat1", dict.atoms())?;
            (samples, Some(dict.atoms().clone()))
        }
    };
    let learned: LearnedDictionary = match p.method {
        LearnMethod::Ksvd => {
            let cfg = crate::dict_learning::KsvdConfig {
                seed: salted(seed, "learn/ksvd", p.ksvd.seed),
                ..p.ksvd
            };
            fit_dictionary_ksvd(&samples, &cfg)?
        }
        LearnMethod::Sae => {
            let cfg = crate::dict_learning::SaeConfig {
                seed: salted(seed, "learn/sae", p.sae.seed),
                ..p.sae
            };
            fit_dictionary_sae(&samples, &cfg)?
        }
    };
    w.put_matrix("learned.mat1", learned.atoms())?;
    w.put_json("learned-meta.json", &learned.meta)?;
    let mut out = headline([
        ("final_loss", learned.meta.final_loss),
        ("atoms", learned.count() as f64),
    ]);
    if let Some(truth) = truth {
        let report = match_columns(learned.atoms(), &truth, p.match_threshold)?;
        w.put_json("match-report.json", &report)?;
        out.insert("recovery_rate".into(), report.recovery_rate);
    }
    Ok(out)
}

pub const ECHO_CSV_HEADER: &str = "seed,m,n,sample-count,recovery-rate,multiplicity-factor,alignment-error";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EchoRow {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub sample_count: usize,
    pub recovery_rate: f64,
    pub multiplicity_factor: f64,
    pub alignment_error: Option<f64>,
}

/// Everything one echo run produces.
#[derive(Debug, Clone)]
pub struct EchoRun {
    pub row: EchoRow,
    pub matches: MatchReport,
    pub report: EchoReport,
    pub multiplicity: MultiplicityReport,
    pub learned: LearnedDictionary,
}

/// Generate `z = x + Ay` data for one seed, learn a dictionary and look for
/// echo pairs in it.
pub fn echo_run(p: &EchoParams, seed: u64) -> Result<EchoRun> {
    let base = make_dictionary(
        p.dim,
        p.features,
        DictionaryKind::GaussianNormalized,
        derive_seed(seed, "echo/dictionary"),
    )?;
    let a = make_random_orthogonal(p.dim, derive_seed(seed, "echo/binding"))?;
    let samples = generate_pair_samples(&base, &a, p.sample_count, p.presence, p.amplitude, derive_seed(seed, "echo/samples"))?;
    let truth = echo_truth(&base, &a)?;
    let ksvd = crate::dict_learning::KsvdConfig {
        seed: salted(seed, "echo/ksvd", p.ksvd.seed),
        ..p.ksvd
    };
    let learned = fit_dictionary_ksvd(&samples.z, &ksvd)?;
    let matches = match_atoms(&learned, &truth, p.match_threshold)?;
    let detect = crate::echo_analysis::EchoConfig {
        seed: salted(seed, "echo/detect", p.detect.seed),
        ..p.detect
    };
    let mut report = detect_echo_pairs(learned.atoms(), &detect)?;
    report.score(&base, &a)?;
    let multiplicity = multiplicity_report(&matches, &report, p.features);
    let row = EchoRow {
        seed,
        m: p.features,
        n: p.dim,
        sample_count: p.sample_count,
        recovery_rate: matches.recovery_rate,
        multiplicity_factor: multiplicity.multiplicity_factor,
        alignment_error: report.alignment_error,
    };
    Ok(EchoRun {
        row,
        matches,
        report,
        multiplicity,
        learned,
    })
}

#[derive(Serialize)]
struct EchoReportJson<'a> {
    pairs: &'a [EchoPair],
    inlier_count: usize,
    hypothesis_size: usize,
    trial: Option<usize>,
    gram_tol: Option<f64>,
    alignment_error: Option<f64>,
    multiplicity_factor: Option<f64>,
    /// The estimated transform as MAT1 text.
    estimated_w: String,
}

pub(crate) fn echo_csv(rows: &[EchoRow]) -> String {
    let mut out = format!("{ECHO_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.m,
            r.n,
            r.sample_count,
            r.recovery_rate,
            r.multiplicity_factor,
            opt_field(r.alignment_error)
        );
    }
    out
}

fn echo(p: &EchoParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let mut rows = Vec::with_capacity(p.runs);
    let mut paired = Vec::new();
    let mut dark = Vec::new();
    for r in 0..p.runs as u64 {
        let run_seed = seed.wrapping_add(r);
        let run = echo_run(p, run_seed)?;
        let json = EchoReportJson {
            pairs: &run.report.pairs,
            inlier_count: run.report.inlier_count,
            hypothesis_size: run.report.hypothesis_size,
            trial: run.report.trial,
            gram_tol: run.report.gram_tol,
            alignment_error: run.report.alignment_error,
            multiplicity_factor: run.report.multiplicity_factor,
            estimated_w: format::matrix_to_string(run.report.estimated_w.values())?,
        };
        w.put_matrix(&format!("learned-{run_seed}.mat1"), run.learned.atoms())?;
        w.put_json(&format!("learned-meta-{run_seed}.json"), &run.learned.meta)?;
        w.put_json(&format!("match-report-{run_seed}.json"), &run.matches)?;
        w.put_json(&format!("echo-report-{run_seed}.json"), &json)?;
        w.put_json(&format!("multiplicity-{run_seed}.json"), &run.multiplicity)?;
        paired.push(run.multiplicity.paired_truth_fraction);
        dark.push(run.multiplicity.dark_atoms.len() as f64);
        rows.push(run.row);
    }
    w.put("echo.csv", echo_csv(&rows))?;
    w.put("recovery-phase.csv", plot::recovery_phase(&rows)?.to_csv())?;
    let recovery: Vec<f64> = rows.iter().map(|r| r.recovery_rate).collect();
    let multiplicity: Vec<f64> = rows.iter().map(|r| r.multiplicity_factor).collect();
    let mut out = headline([
        ("recovery_rate_mean", mean(&recovery)),
        ("multiplicity_factor_mean", mean(&multiplicity)),
        ("paired_truth_fraction_min", paired.iter().copied().fold(f64::INFINITY, f64::min)),
        ("dark_atoms_max", dark.iter().copied().fold(0.0, f64::max)),
    ]);
    let alignments: Vec<f64> = rows.iter().filter_map(|r| r.alignment_error).collect();
    if !alignments.is_empty() {
        out.insert("alignment_error_max".into(), alignments.iter().copied().fold(0.0, f64::max));
    }
    Ok(out)
}

/// Scenario, labeled data and sweep for one seed.
pub fn steer_run(p: &SteerParams, seed: u64) -> Result<SweepResult> {
    let scn = make_scenario(&p.scenario, derive_seed(seed, "steer/scenario"))?;
    let set = generate_labeled(&scn, p.sample_count, derive_seed(seed, "steer/samples"))?;
    steering_sweep(&scn, &set, &p.sweep())
}

pub const SWEEP_CSV_HEADER: &str = "c1-hat,c2-hat,mean-score-reduction,side-effect-norm";

#[derive(Serialize)]
struct SteerSummary<'a> {
    discrepancy: &'a crate::steering_lab::Discrepancy,
    best_index: usize,
    best_coefficients: (f64, f64),
    best_score_reduction: f64,
    best_side_effect_norm: f64,
    probe_training_accuracy: f64,
    probe_bias: f64,
    max_identity_error: f64,
    grid_points: usize,
}

fn steer(p: &SteerParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let result = steer_run(p, seed)?;
    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for pt in &result.points {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            pt.c1_hat, pt.c2_hat, pt.mean_score_reduction, pt.side_effect_norm
        );
    }
    w.put("sweep.csv", csv)?;
    let grid = p.sweep().grid;
    let summary = SteerSummary {
        discrepancy: &result.discrepancy,
        best_index: result.best_index,
        best_coefficients: result.best.coefficients,
        best_score_reduction: result.best.score_reduction,
        best_side_effect_norm: result.best.side_effect_norm,
        probe_training_accuracy: result.probe.training_accuracy,
        probe_bias: result.probe.model.bias,
        max_identity_error: result.max_identity_error,
        grid_points: grid.len(),
    };
    w.put_json("steer-summary.json", &summary)?;
    w.put_matrix("probe-weight.mat1", &DMatrix::from_column_slice(result.probe.model.weight.len(), 1, result.probe.model.weight.as_slice()))?;
    w.put_matrix("best-direction.mat1", &DMatrix::from_column_slice(result.best.direction.len(), 1, result.best.direction.as_slice()))?;
    w.put("discrepancy-heatmap.csv", plot::discrepancy_heatmap(&grid, &result.points)?.to_csv())?;
    Ok(headline([
        ("cosine", result.discrepancy.cosine),
        ("coefficient_gap", result.discrepancy.coefficient_gap),
        ("max_identity_error", result.max_identity_error),
        ("probe_training_accuracy", result.probe.training_accuracy),
    ]))
}

fn bench(grid: &BenchGrid, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let grid = BenchGrid {
        seed: salted(seed, "bench", grid.seed),
        ..grid.clone()
    };
    let table = run_capacity(&grid)?;
    let summary = summarize(&table)?;
    w.put("capacity.csv", capacity_csv(&table))?;
    w.put_json("capacity-summary.json", &summary)?;
    if let Ok(curve) = plot::capacity_curve(&table) {
        w.put("capacity-curve.csv", curve.to_csv())?;
    }
    let worst = table
        .iter()
        .filter_map(|c| c.metrics.map(|m| m.mae_mean))
        .fold(0.0, f64::max);
    Ok(headline([
        ("cells", summary.cells as f64),
        ("failed_cells", summary.failed_cells.len() as f64),
        ("all_monotone_in_k", flag(summary.all_monotone_in_k)),
        ("all_stratified_hold", flag(summary.all_stratified_hold)),
        ("mae_mean_max", worst),
    ]))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub loss: f64,
    pub spearman: f64,
    /// Held-out Spearman of a probe trained on noise tokens, per null seed.
    pub null_spearman: Vec<f64>,
    pub null_mean_spearman: f64,
    #[serde(skip)]
    pub probe: DMatrix<f64>,
}

fn noise_sequence(seed: u64, nodes: usize, dim: usize) -> Result<LabeledSequence> {
    let mut rng = stream(seed, "probe/null");
    let tree = TreeSpec::random(nodes, &mut rng);
    let tokens = (0..nodes).map(|_| gaussian_vector(&mut rng, dim)).collect();
    LabeledSequence::new(TokenSequence::with_random_positions(tokens, seed)?, tree)
}

/// Fit on Pythagorean embeddings of random trees; the null model trains on
/// Gaussian tokens with an unrelated tree and is scored on a fresh draw.
pub fn probe_run(p: &ProbeParams, seed: u64) -> Result<ProbeOutcome> {
    let data = (0..p.trees as u64)
        .map(|s| {
            let tree = TreeSpec::random(p.nodes, &mut substream(seed, "probe/tree", s));
            let seq = embed_tree_pythagorean(&tree, p.dim, salted(seed, "probe/embed", s))?;
            LabeledSequence::new(seq, tree)
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = crate::relational::ProbeConfig {
        seed: salted(seed, "probe/fit", p.probe.seed),
        ..p.probe
    };
    let fit = fit_structural_probe(&data, &cfg)?;
    let spearman = probe_spearman(&fit.probe, &data)?;
    let null_spearman = (0..p.null_seeds as u64)
        .map(|s| {
            let train = noise_sequence(salted(seed, "probe/null-train", s), p.nodes, p.dim)?;
            let held_out = noise_sequence(salted(seed, "probe/null-test", s), p.nodes, p.dim)?;
            let null_cfg = crate::relational::ProbeConfig {
                seed: salted(seed, "probe/null-fit", s),
                ..p.probe
            };
            let fit = fit_structural_probe(std::slice::from_ref(&train), &null_cfg)?;
            probe_spearman(&fit.probe, std::slice::from_ref(&held_out))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeOutcome {
        loss: fit.loss,
        spearman,
        null_mean_spearman: mean(&null_spearman),
        null_spearman,
        probe: fit.probe.matrix().clone(),
    })
}

fn probe(p: &ProbeParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let outcome = probe_run(p, seed)?;
    w.put_matrix("probe.mat1", &outcome.probe)?;
    w.put_json("probe-report.json", &outcome)?;
    Ok(headline([
        ("loss", outcome.loss),
        ("spearman", outcome.spearman),
        ("null_mean_spearman", outcome.null_mean_spearman),
    ]))
}

#[derive(Debug, Clone)]
pub struct DiffsOutcome {
    pub relations: DMatrix<f64>,
    /// Labeled-pair differences as columns.
    pub differences: DMatrix<f64>,
    pub learned: LearnedDictionary,
    pub matches: MatchReport,
}

/// Plant relations, difference the labeled pairs and learn a dictionary on
/// the differences.
pub fn diffs_run(p: &DiffsParams, seed: u64) -> Result<DiffsOutcome> {
    let planted = planted_relation_sequences(&p.planted, derive_seed(seed, "diffs/planted"))?;
    let mut columns = Vec::new();
    for (seq, pairs) in planted.sequences.iter().zip(&planted.labeled) {
        columns.extend(token_differences(seq, &PairPolicy::Labeled(pairs.clone()))?);
    }
    if columns.is_empty() {
        return Err(Error::DegenerateData("no labeled pairs to difference".into()));
    }
    let differences = DMatrix::from_columns(&columns);
    let cfg = crate::dict_learning::KsvdConfig {
        seed: salted(seed, "diffs/ksvd", p.ksvd.seed),
        ..p.ksvd
    };
    let learned = fit_dictionary_ksvd(&differences, &cfg)?;
    let matches = match_columns(learned.atoms(), &planted.relations, p.match_threshold)?;
    Ok(DiffsOutcome {
        relations: planted.relations,
        differences,
        learned,
        matches,
    })
}

fn diffs(p: &DiffsParams, seed: u64, w: &mut ArtifactWriter) -> Result<Headline> {
    let outcome = diffs_run(p, seed)?;
    w.put_matrix("relations.mat1", &outcome.relations)?;
    w.put_matrix("learned.mat1", outcome.learned.atoms())?;
    w.put_json("learned-meta.json", &outcome.learned.meta)?;
    w.put_json("match-report.json", &outcome.matches)?;
    Ok(headline([
        ("differences", outcome.differences.ncols() as f64),
        ("recovered", outcome.matches.assignment.len() as f64),
        ("recovery_rate", outcome.matches.recovery_rate),
    ]))
}
