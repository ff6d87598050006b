//! Predict versus control in a one-step "previous token" layer.
//!
//! A representation is `t' = g + b_cur·v + b_prev·A·v` where `g` is background
//! noise kept orthogonal to `span{v, Av}`. A ground-truth scorer
//! `s(t) = c₁⟨t, v⟩ + c₂⟨t, Av⟩` plays the role of the causal behavior, while a
//! linear probe is trained only on binary labels derived from the flags. The
//! sweep compares the direction the probe points along with the direction that
//! actually lowers the scorer the most.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binding::SquareMatrix;
use crate::error::{check_dim, Error, Result};
use crate::feature_space::check_probability;
use crate::linalg::{haar_orthogonal, orthonormal_basis};
use crate::rng;
use crate::Vector;

/// Scenario construction redraws `A` until `|⟨v, Av⟩|` is at most this.
pub const MAX_OVERLAP: f64 = 0.1;
pub const MAX_REDRAWS: usize = 1000;
/// Allowed deviation of a steering direction's norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// How labels are derived from the presence flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRule {
    /// `c₁·b_cur + c₂·b_prev ≥ θ`.
    #[default]
    Threshold,
    /// `b_cur ∨ b_prev`, independent of the scorer weights.
    AnyFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub dim: usize,
    pub c1: f64,
    pub c2: f64,
    pub threshold: f64,
    pub noise: f64,
    /// Probability the current-token feature is present.
    pub q_cur: f64,
    /// Probability the previous-token feature is present.
    pub q_prev: f64,
    pub label_rule: LabelRule,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            dim: 128,
            c1: 1.0,
            c2: 1.0,
            threshold: 0.99,
            noise: 0.1,
            q_cur: 0.5,
            q_prev: 0.5,
            label_rule: LabelRule::Threshold,
        }
    }
}

impl ScenarioParams {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidDimensions(format!("dim must be at least 2, got {}", self.dim)));
        }
        check_probability(self.q_cur)?;
        check_probability(self.q_prev)?;
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidParameter(format!("noise scale {} must be finite and nonnegative", self.noise)));
        }
        if ![self.c1, self.c2, self.threshold].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("scorer weights and threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SteeringScenario {
    params: ScenarioParams,
    v: Vector,
    a: SquareMatrix,
    av: Vector,
    /// Orthonormal basis of `span{v, Av}`.
    span: DMatrix<f64>,
}

impl SteeringScenario {
    /// Assemble a scenario from an explicit feature and transform.
    pub fn from_parts(v: Vector, a: SquareMatrix, params: ScenarioParams) -> Result<Self> {
        params.validate()?;
        check_dim(params.dim, v.len())?;
        check_dim(params.dim, a.side())?;
        let a = SquareMatrix::orthogonal(a.into_values())?;
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitDirection(v.norm()));
        }
        let av = a.apply(&v)?;
        let span = orthonormal_basis(&DMatrix::from_columns(&[v.clone(), av.clone()]), 1e-12);
        Ok(Self { params, v, a, av, span })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn v(&self) -> &Vector {
        &self.v
    }

    pub fn a(&self) -> &SquareMatrix {
        &self.a
    }

    pub fn av(&self) -> &Vector {
        &self.av
    }

    /// `⟨v, Av⟩`.
    pub fn overlap(&self) -> f64 {
        self.v.dot(&self.av)
    }

    /// Ground-truth scorer `c₁⟨t, v⟩ + c₂⟨t, Av⟩`.
    pub fn score(&self, t: &Vector) -> f64 {
        self.params.c1 * t.dot(&self.v) + self.params.c2 * t.dot(&self.av)
    }

    /// The scorer's gradient `c₁v + c₂Av`.
    pub fn scorer_gradient(&self) -> Vector {
        &self.v * self.params.c1 + &self.av * self.params.c2
    }

    pub fn label(&self, b_cur: bool, b_prev: bool) -> bool {
        match self.params.label_rule {
            LabelRule::Threshold => {
                let s = self.params.c1 * f64::from(u8::from(b_cur)) + self.params.c2 * f64::from(u8::from(b_prev));
                s >= self.params.threshold
            }
            LabelRule::AnyFlag => b_cur || b_prev,
        }
    }

    fn remove_span(&self, g: &mut Vector) {
        let coeffs = self.span.tr_mul(g);
        *g -= &self.span * coeffs;
    }
}

/// Draw a unit `v` and a Haar-random `A`, redrawing `A` until
/// `|⟨v, Av⟩| ≤ MAX_OVERLAP` so that `A` is far from the identity on `v`.
pub fn make_scenario(params: &ScenarioParams, seed: u64) -> Result<SteeringScenario> {
    params.validate()?;
    let mut vr = rng::stream(seed, "steering_lab/v");
    let g = rng::gaussian_vector(&mut vr, params.dim);
    let v = &g / g.norm();
    for attempt in 0..MAX_REDRAWS {
        let mut ar = rng::substream(seed, "steering_lab/a", attempt as u64);
        let a = haar_orthogonal(&mut ar, params.dim);
        let av = &a * &v;
        if v.dot(&av).abs() <= MAX_OVERLAP {
            return SteeringScenario::from_parts(v, SquareMatrix::orthogonal(a)?, *params);
        }
    }
    Err(Error::ConstructionFailure(format!(
        "no transform with |<v, Av>| <= {MAX_OVERLAP} in {MAX_REDRAWS} draws"
    )))
}

/// Samples as columns, with labels and the `(b_cur, b_prev)` flags behind them.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub samples: DMatrix<f64>,
    pub labels: Vec<bool>,
    pub flags: Vec<(bool, bool)>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i]).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        self.positives().len() as f64 / self.len().max(1) as f64
    }
}

pub fn generate_labeled(scn: &SteeringScenario, count: usize, seed: u64) -> Result<LabeledSet> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let p = scn.params;
    let mut rng = rng::stream(seed, "steering_lab/samples");
    let mut samples = DMatrix::zeros(p.dim, count);
    let mut labels = Vec::with_capacity(count);
    let mut flags = Vec::with_capacity(count);
    for k in 0..count {
        let b_cur = rng.random::<f64>() < p.q_cur;
        let b_prev = rng.random::<f64>() < p.q_prev;
        let mut t = rng::gaussian_vector(&mut rng, p.dim) * p.noise;
        scn.remove_span(&mut t);
        if b_cur {
            t += &scn.v;
        }
        if b_prev {
            t += &scn.av;
        }
        samples.set_column(k, &t);
        labels.push(scn.label(b_cur, b_prev));
        flags.push((b_cur, b_prev));
    }
    Ok(LabeledSet { samples, labels, flags })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub weight: Vector,
    pub bias: f64,
}

impl ProbeModel {
    pub fn predict(&self, t: &Vector) -> f64 {
        self.weight.dot(t) + self.bias
    }

    pub fn classify(&self, t: &Vector) -> bool {
        self.predict(t) >= 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFit {
    pub model: ProbeModel,
    pub training_accuracy: f64,
}

/// Ridge regression of the 0/1 labels on the samples. The bias is left
/// unpenalized by centering both sides first.
pub fn fit_probe(set: &LabeledSet, lambda: f64) -> Result<ProbeFit> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("ridge weight {lambda} must be finite and nonnegative")));
    }
    let positives = set.labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == set.len() {
        return Err(Error::SingleClassData(u8::from(positives > 0)));
    }
    let n = set.len() as f64;
    let y = Vector::from_iterator(set.len(), set.labels.iter().map(|&l| f64::from(u8::from(l))));
    let y_mean = y.mean();
    let x_mean = set.samples.column_mean();
    let mut xc = set.samples.clone();
    for mut col in xc.column_iter_mut() {
        col -= &x_mean;
    }
    let yc = y.add_scalar(-y_mean);
    let mut normal = &xc * xc.transpose();
    for i in 0..normal.nrows() {
        normal[(i, i)] += lambda;
    }
    let rhs = &xc * &yc;
    let weight = normal
        .cholesky()
        .ok_or_else(|| Error::RankDeficientDesign("probe normal equations are singular; raise the ridge weight".into()))?
        .solve(&rhs);
    let bias = y_mean - weight.dot(&x_mean);
    let model = ProbeModel { weight, bias };
    let correct = set
        .samples
        .column_iter()
        .zip(&set.labels)
        .filter(|(t, &l)| model.classify(&t.into_owned()) == l)
        .count();
    Ok(ProbeFit {
        model,
        training_accuracy: correct as f64 / n,
    })
}

/// `t' − α·direction`.
pub fn steer(t: &Vector, direction: &Vector, alpha: f64) -> Result<Vector> {
    check_dim(t.len(), direction.len())?;
    let norm = direction.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitDirection(norm));
    }
    Ok(t - direction * alpha)
}

/// Least-squares coefficients of `w` on `(v, Av)` and the norm of what is left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub c1: f64,
    pub c2: f64,
    pub residual_norm: f64,
}

pub fn decompose_direction(scn: &SteeringScenario, w: &Vector) -> Result<Decomposition> {
    check_dim(scn.dim(), w.len())?;
    let (v, av) = (&scn.v, &scn.av);
    let gram = Matrix2::new(v.dot(v), v.dot(av), av.dot(v), av.dot(av));
    let rhs = Vector2::new(w.dot(v), w.dot(av));
    let c = gram
        .try_inverse()
        .ok_or_else(|| Error::RankDeficientDesign("v and Av are parallel".into()))?
        * rhs;
    let residual = w - v * c[0] - av * c[1];
    Ok(Decomposition {
        c1: c[0],
        c2: c[1],
        residual_norm: residual.norm(),
    })
}

/// Intervention strength used by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "kebab-case")]
pub enum AlphaPolicy {
    /// Same `α` for every sample and direction, so every grid point spends
    /// the same intervention norm.
    Fixed(f64),
    /// `α = ⟨t', d⟩`: remove each sample's projection on the direction.
    Projection,
}

impl AlphaPolicy {
    fn alpha(&self, t: &Vector, d: &Vector) -> f64 {
        match *self {
            AlphaPolicy::Fixed(a) => a,
            AlphaPolicy::Projection => t.dot(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Coefficient pairs `(ĉ₁, ĉ₂)`; each names the direction `ĉ₁v + ĉ₂Av`.
    pub grid: Vec<(f64, f64)>,
    pub alpha: AlphaPolicy,
    /// Ridge weight for the probe.
    pub ridge: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: square_grid(41, 2.0),
            alpha: AlphaPolicy::Fixed(1.0),
            ridge: 1000.0,
        }
    }
}

/// `side × side` points evenly spaced over `[−half_width, half_width]²`,
/// `ĉ₁` varying slowest.
pub fn square_grid(side: usize, half_width: f64) -> Vec<(f64, f64)> {
    let coord = |i: usize| {
        if side == 1 {
            0.0
        } else {
            -half_width + 2.0 * half_width * i as f64 / (side - 1) as f64
        }
    };
    (0..side)
        .flat_map(|i| (0..side).map(move |j| (coord(i), coord(j))))
        .collect()
}

/// Result of steering every positive sample along one grid direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub mean_score_reduction: f64,
    /// Mean `|α|·‖d − ⟨d, ĝ⟩ĝ‖`: movement not aimed along the scorer gradient `ĝ`.
    pub side_effect_norm: f64,
    /// Largest deviation from `s(t − αd) = s(t) − α(c₁⟨d,v⟩ + c₂⟨d,Av⟩)`.
    pub identity_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringOutcome {
    pub direction: Vector,
    /// Decomposition of `direction` onto `(v, Av)`.
    pub coefficients: (f64, f64),
    pub score_reduction: f64,
    pub side_effect_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// `cos(best steering direction, probe direction)`.
    pub cosine: f64,
    /// Probe weight decomposed onto `(v, Av)`.
    pub probe_coefficients: (f64, f64),
    pub scorer_coefficients: (f64, f64),
    /// Distance between the two coefficient pairs after scaling each to unit length.
    pub coefficient_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// One entry per grid point with a nonzero direction, in grid order.
    pub points: Vec<SweepPoint>,
    pub best: SteeringOutcome,
    pub best_index: usize,
    pub probe: ProbeFit,
    pub probe_direction: Vector,
    pub discrepancy: Discrepancy,
    /// Largest scorer-identity deviation over every evaluated (sample, direction).
    pub max_identity_error: f64,
}

/// Relative margin within which two mean reductions count as tied.
const TIE_MARGIN: f64 = 1e-12;

fn unit_pair(c: (f64, f64)) -> (f64, f64) {
    let n = c.0.hypot(c.1);
    if n > 0.0 {
        (c.0 / n, c.1 / n)
    } else {
        (0.0, 0.0)
    }
}

/// Steer all positive samples along every grid direction and compare the
/// best direction with the probe's.
pub fn steering_sweep(scn: &SteeringScenario, set: &LabeledSet, cfg: &SweepConfig) -> Result<SweepResult> {
    check_dim(scn.dim(), set.samples.nrows())?;
    if cfg.grid.is_empty() {
        return Err(Error::InvalidParameter("steering grid is empty".into()));
    }
    let positives = set.positives();
    if positives.is_empty() {
        return Err(Error::EmptyPositiveSet);
    }
    let probe = fit_probe(set, cfg.ridge)?;
    let probe_norm = probe.model.weight.norm();
    if !(probe_norm > 0.0) {
        return Err(Error::DegenerateData("probe weight is zero".into()));
    }
    let probe_direction = &probe.model.weight / probe_norm;

    let p = scn.params;
    let gradient = scn.scorer_gradient();
    let g_hat = gradient.normalize();
    let samples: Vec<(Vector, f64)> = positives
        .iter()
        .map(|&i| {
            let t = set.samples.column(i).into_owned();
            let s = scn.score(&t);
            (t, s)
        })
        .collect();

    let evaluated: Vec<Option<(SweepPoint, Vector)>> = cfg
        .grid
        .par_iter()
        .map(|&(c1_hat, c2_hat)| -> Result<Option<(SweepPoint, Vector)>> {
            let raw = &scn.v * c1_hat + &scn.av * c2_hat;
            let norm = raw.norm();
            if !(norm > 1e-12) {
                return Ok(None);
            }
            let d = raw / norm;
            let gain = p.c1 * d.dot(&scn.v) + p.c2 * d.dot(&scn.av);
            let off_gradient = (&d - &g_hat * d.dot(&g_hat)).norm();
            let (mut reduction, mut side, mut identity) = (0.0, 0.0, 0.0f64);
            for (t, s) in &samples {
                let alpha = cfg.alpha.alpha(t, &d);
                let after = scn.score(&steer(t, &d, alpha)?);
                reduction += s - after;
                side += alpha.abs() * off_gradient;
                identity = identity.max((after - (s - alpha * gain)).abs());
            }
            let count = samples.len() as f64;
            Ok(Some((
                SweepPoint {
                    c1_hat,
                    c2_hat,
                    mean_score_reduction: reduction / count,
                    side_effect_norm: side / count,
                    identity_error: identity,
                },
                d,
            )))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut best: Option<(usize, SweepPoint, Vector)> = None;
    for (point, d) in evaluated.into_iter().flatten() {
        let r = point.mean_score_reduction;
        let better = match &best {
            None => true,
            Some((_, b, _)) => r > b.mean_score_reduction + TIE_MARGIN * b.mean_score_reduction.abs().max(1.0),
        };
        if better {
            best = Some((points.len(), point, d));
        }
        points.push(point);
    }
    let (best_index, best_point, direction) =
        best.ok_or_else(|| Error::InvalidParameter("every grid point names the zero direction".into()))?;
    let max_identity_error = points.iter().map(|pt| pt.identity_error).fold(0.0, f64::max);

    let best_dec = decompose_direction(scn, &direction)?;
    let probe_dec = decompose_direction(scn, &probe.model.weight)?;
    let (pu, su) = (unit_pair((probe_dec.c1, probe_dec.c2)), unit_pair((p.c1, p.c2)));
    let discrepancy = Discrepancy {
        cosine: direction.dot(&probe_direction),
        probe_coefficients: (probe_dec.c1, probe_dec.c2),
        scorer_coefficients: (p.c1, p.c2),
        coefficient_gap: (pu.0 - su.0).hypot(pu.1 - su.1),
    };
    Ok(SweepResult {
        points,
        best: SteeringOutcome {
            direction,
            coefficients: (best_dec.c1, best_dec.c2),
            score_reduction: best_point.mean_score_reduction,
            side_effect_norm: best_point.side_effect_norm,
        },
        best_index,
        probe,
        probe_direction,
        discrepancy,
        max_identity_error,
    })
}
