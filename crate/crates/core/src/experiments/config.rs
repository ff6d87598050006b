//! Experiment configuration files.
//!
//! A config is a JSON object with four keys:
//!
//! ```json
//! { "experiment": "echo", "seed": 0, "out": "runs/echo", "params": { "sample_count": 20000 } }
//! ```
//!
//! `seed` defaults to 0, `out` to `"out"`, and every field of `params` has a
//! documented default. Unknown keys anywhere are schema violations.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::capacity_bench::BenchGrid;
use crate::dict_learning::{KsvdConfig, LearnMethod, SaeConfig};
use crate::echo_analysis::EchoConfig;
use crate::error::{ConfigError, Error, Result};
use crate::feature_space::{Amplitude, DictionaryKind};
use crate::relational::{PlantedRelationsConfig, ProbeConfig};
use crate::steering_lab::{AlphaPolicy, ScenarioParams, SweepConfig, square_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentTag {
    Gen,
    Bind,
    Learn,
    Echo,
    Steer,
    Bench,
    Probe,
    Diffs,
}

impl ExperimentTag {
    pub const ALL: [ExperimentTag; 8] = [
        Self::Gen,
        Self::Bind,
        Self::Learn,
        Self::Echo,
        Self::Steer,
        Self::Bench,
        Self::Probe,
        Self::Diffs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gen => "gen",
            Self::Bind => "bind",
            Self::Learn => "learn",
            Self::Echo => "echo",
            Self::Steer => "steer",
            Self::Bench => "bench",
            Self::Probe => "probe",
            Self::Diffs => "diffs",
        }
    }
}

impl std::fmt::Display for ExperimentTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample a dictionary and sparse codes, then read the codes back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub dim: usize,
    pub features: usize,
    pub dictionary: DictionaryKind,
    pub presence: f64,
    pub amplitude: Amplitude,
    pub sample_count: usize,
    pub active_threshold: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            dim: 64,
            features: 128,
            dictionary: DictionaryKind::GaussianNormalized,
            presence: 0.03,
            amplitude: Amplitude::ConstantOne,
            sample_count: 1000,
            active_threshold: 0.5,
        }
    }
}

/// Round trips of every exact binding mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BindParams {
    pub dim: usize,
    pub bits: usize,
    pub trials: usize,
    /// Node count of the random trees used for the embedding identity.
    pub tree_nodes: usize,
}

impl Default for BindParams {
    fn default() -> Self {
        Self {
            dim: 64,
            bits: 1024,
            trials: 20,
            tree_nodes: 15,
        }
    }
}

/// Dictionary learning on synthetic (or imported) samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnParams {
    pub dim: usize,
    pub features: usize,
    pub dictionary: DictionaryKind,
    pub presence: f64,
    pub amplitude: Amplitude,
    pub sample_count: usize,
    pub method: LearnMethod,
    pub ksvd: KsvdConfig,
    pub sae: SaeConfig,
    pub match_threshold: f64,
    /// MAT1 file whose columns replace the synthetic samples.
    pub samples_path: Option<PathBuf>,
    /// MAT1 file of ground-truth atoms (columns) to match against imported samples.
    pub truth_path: Option<PathBuf>,
}

impl Default for LearnParams {
    fn default() -> Self {
        Self {
            dim: 64,
            features: 96,
            dictionary: DictionaryKind::GaussianNormalized,
            presence: 0.03,
            amplitude: Amplitude::ConstantOne,
            sample_count: 4000,
            method: LearnMethod::Ksvd,
            ksvd: KsvdConfig {
                atoms: 96,
                sparsity: 8,
                iterations: 20,
                ..KsvdConfig::default()
            },
            sae: SaeConfig::default(),
            match_threshold: 0.9,
            samples_path: None,
            truth_path: None,
        }
    }
}

/// Plain-plus-echo samples `z = x + Ay`, K-SVD, then echo-pair detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoParams {
    pub dim: usize,
    pub features: usize,
    pub presence: f64,
    pub amplitude: Amplitude,
    pub sample_count: usize,
    /// Independent repetitions; run `r` uses seed `seed + r`.
    pub runs: usize,
    pub ksvd: KsvdConfig,
    pub detect: EchoConfig,
    pub match_threshold: f64,
}

impl Default for EchoParams {
    fn default() -> Self {
        Self {
            dim: 256,
            features: 32,
            presence: 1.0 / 32.0,
            amplitude: Amplitude::ConstantOne,
            sample_count: 20_000,
            runs: 1,
            ksvd: KsvdConfig {
                atoms: 64,
                sparsity: 16,
                iterations: 10,
                ..KsvdConfig::default()
            },
            detect: EchoConfig::default(),
            match_threshold: 0.9,
        }
    }
}

/// Probe versus best steering direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteerParams {
    pub scenario: ScenarioParams,
    pub sample_count: usize,
    /// The sweep grid is `grid_side²` points over `[−grid_half_width, grid_half_width]²`.
    pub grid_side: usize,
    pub grid_half_width: f64,
    pub alpha: AlphaPolicy,
    pub ridge: f64,
}

impl Default for SteerParams {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            scenario: ScenarioParams::default(),
            sample_count: 4000,
            grid_side: 41,
            grid_half_width: 2.0,
            alpha: sweep.alpha,
            ridge: sweep.ridge,
        }
    }
}

impl SteerParams {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            grid: square_grid(self.grid_side, self.grid_half_width),
            alpha: self.alpha,
            ridge: self.ridge,
        }
    }
}

/// Structural probe on Pythagorean tree embeddings, plus a noise null model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeParams {
    pub dim: usize,
    pub nodes: usize,
    pub trees: usize,
    pub null_seeds: usize,
    pub probe: ProbeConfig,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            dim: 32,
            nodes: 15,
            trees: 8,
            null_seeds: 20,
            probe: ProbeConfig::default(),
        }
    }
}

/// Dictionary learning on labeled token-pair differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffsParams {
    pub planted: PlantedRelationsConfig,
    pub ksvd: KsvdConfig,
    pub match_threshold: f64,
}

impl Default for DiffsParams {
    fn default() -> Self {
        Self {
            planted: PlantedRelationsConfig::default(),
            ksvd: KsvdConfig {
                atoms: 8,
                sparsity: 1,
                iterations: 20,
                ..KsvdConfig::default()
            },
            match_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Gen(GenParams),
    Bind(BindParams),
    Learn(LearnParams),
    Echo(EchoParams),
    Steer(SteerParams),
    Bench(BenchGrid),
    Probe(ProbeParams),
    Diffs(DiffsParams),
}

impl Params {
    pub fn tag(&self) -> ExperimentTag {
        match self {
            Params::Gen(_) => ExperimentTag::Gen,
            Params::Bind(_) => ExperimentTag::Bind,
            Params::Learn(_) => ExperimentTag::Learn,
            Params::Echo(_) => ExperimentTag::Echo,
            Params::Steer(_) => ExperimentTag::Steer,
            Params::Bench(_) => ExperimentTag::Bench,
            Params::Probe(_) => ExperimentTag::Probe,
            Params::Diffs(_) => ExperimentTag::Diffs,
        }
    }

    /// All-default parameters for `tag`.
    pub fn defaults(tag: ExperimentTag) -> Self {
        match tag {
            ExperimentTag::Gen => Params::Gen(Default::default()),
            ExperimentTag::Bind => Params::Bind(Default::default()),
            ExperimentTag::Learn => Params::Learn(Default::default()),
            ExperimentTag::Echo => Params::Echo(Default::default()),
            ExperimentTag::Steer => Params::Steer(Default::default()),
            ExperimentTag::Bench => Params::Bench(Default::default()),
            ExperimentTag::Probe => Params::Probe(Default::default()),
            ExperimentTag::Diffs => Params::Diffs(Default::default()),
        }
    }

    fn to_value(&self) -> serde_json::Value {
        let v = match self {
            Params::Gen(p) => serde_json::to_value(p),
            Params::Bind(p) => serde_json::to_value(p),
            Params::Learn(p) => serde_json::to_value(p),
            Params::Echo(p) => serde_json::to_value(p),
            Params::Steer(p) => serde_json::to_value(p),
            Params::Bench(p) => serde_json::to_value(p),
            Params::Probe(p) => serde_json::to_value(p),
            Params::Diffs(p) => serde_json::to_value(p),
        };
        v.expect("parameter blocks serialize")
    }

    fn from_value(tag: ExperimentTag, value: &serde_json::Value) -> Result<Self> {
        Ok(match tag {
            ExperimentTag::Gen => Params::Gen(block(value)?),
            ExperimentTag::Bind => Params::Bind(block(value)?),
            ExperimentTag::Learn => Params::Learn(block(value)?),
            ExperimentTag::Echo => Params::Echo(block(value)?),
            ExperimentTag::Steer => Params::Steer(block(value)?),
            ExperimentTag::Bench => Params::Bench(block(value)?),
            ExperimentTag::Probe => Params::Probe(block(value)?),
            ExperimentTag::Diffs => Params::Diffs(block(value)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentTag,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_out")]
    out: PathBuf,
    #[serde(default = "empty_object")]
    params: serde_json::Value,
}

#[derive(Serialize)]
struct ConfigOut<'a> {
    experiment: ExperimentTag,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<&'a Path>,
    params: serde_json::Value,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> Error {
    ConfigError::Schema {
        location: location.into(),
        message: message.into(),
    }
    .into()
}

fn block<T: DeserializeOwned>(value: &serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let location = if path == "." { "params".to_string() } else { format!("params.{path}") };
        schema(location, e.into_inner().to_string())
    })
}

fn require(ok: bool, location: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(schema(location, message))
    }
}

fn require_probability(p: f64, location: &str) -> Result<()> {
    require((0.0..=1.0).contains(&p), location, "must lie in [0, 1]")
}

fn require_file(path: &Option<PathBuf>, location: &str) -> Result<()> {
    match path {
        Some(p) if !p.is_file() => Err(schema(location, format!("file {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn new(params: Params) -> Self {
        Self {
            seed: 0,
            out: default_out(),
            params,
        }
    }

    pub fn tag(&self) -> ExperimentTag {
        self.params.tag()
    }

    /// Effective config as pretty JSON, `out` included.
    pub fn to_json(&self) -> String {
        self.render(true)
    }

    /// Effective config without the output directory: the form copied into
    /// the artifact tree and hashed into the manifest, so identical runs in
    /// different directories produce identical trees.
    pub fn to_canonical_json(&self) -> String {
        self.render(false)
    }

    fn render(&self, with_out: bool) -> String {
        let out = ConfigOut {
            experiment: self.tag(),
            seed: self.seed,
            out: with_out.then_some(self.out.as_path()),
            params: self.params.to_value(),
        };
        serde_json::to_string_pretty(&out).expect("config serializes") + "\n"
    }

    /// Check module preconditions that the type system does not encode.
    pub fn validate(&self) -> Result<()> {
        match &self.params {
            Params::Gen(p) => {
                require(p.dim > 0, "params.dim", "must be positive")?;
                require(p.features > 0, "params.features", "must be positive")?;
                require(p.sample_count > 0, "params.sample_count", "must be positive")?;
                require_probability(p.presence, "params.presence")?;
                if p.dictionary == DictionaryKind::OrthogonalSubset {
                    require(p.features <= p.dim, "params.features", "orthogonal-subset needs features <= dim")?;
                }
            }
            Params::Bind(p) => {
                require(p.dim > 0, "params.dim", "must be positive")?;
                require(p.bits > 0, "params.bits", "must be positive")?;
                require(p.trials > 0, "params.trials", "must be positive")?;
                require(p.tree_nodes > 0, "params.tree_nodes", "must be positive")?;
                require(p.tree_nodes <= p.dim + 1, "params.tree_nodes", "needs tree_nodes - 1 <= dim")?;
            }
            Params::Learn(p) => {
                require_file(&p.samples_path, "params.samples_path")?;
                require_file(&p.truth_path, "params.truth_path")?;
                require(p.truth_path.is_none() || p.samples_path.is_some(), "params.truth_path", "only used with samples_path")?;
                if p.samples_path.is_none() {
                    require(p.dim > 0, "params.dim", "must be positive")?;
                    require(p.features > 0, "params.features", "must be positive")?;
                    require(p.sample_count > 0, "params.sample_count", "must be positive")?;
                    require_probability(p.presence, "params.presence")?;
                }
                match p.method {
                    LearnMethod::Ksvd => {
                        require(p.ksvd.atoms > 0, "params.ksvd.atoms", "must be positive")?;
                        require(p.ksvd.sparsity > 0, "params.ksvd.sparsity", "must be positive")?;
                    }
                    LearnMethod::Sae => {
                        require(p.sae.width > 0, "params.sae.width", "must be positive")?;
                        require(p.sae.batch > 0, "params.sae.batch", "must be positive")?;
                        require(p.sae.step > 0.0, "params.sae.step", "must be positive")?;
                    }
                }
            }
            Params::Echo(p) => {
                require(p.dim > 0, "params.dim", "must be positive")?;
                require(p.features > 0, "params.features", "must be positive")?;
                require(p.sample_count > 0, "params.sample_count", "must be positive")?;
                require(p.runs > 0, "params.runs", "must be positive")?;
                require_probability(p.presence, "params.presence")?;
                require(p.ksvd.atoms >= 2, "params.ksvd.atoms", "must be at least 2")?;
                require(p.ksvd.sparsity > 0, "params.ksvd.sparsity", "must be positive")?;
                require(p.detect.trials > 0, "params.detect.trials", "must be positive")?;
            }
            Params::Steer(p) => {
                require(p.scenario.dim >= 2, "params.scenario.dim", "must be at least 2")?;
                require_probability(p.scenario.q_cur, "params.scenario.q_cur")?;
                require_probability(p.scenario.q_prev, "params.scenario.q_prev")?;
                require(p.sample_count >= 2, "params.sample_count", "must be at least 2")?;
                require(p.grid_side > 0, "params.grid_side", "must be positive")?;
                require(p.grid_half_width > 0.0, "params.grid_half_width", "must be positive")?;
                require(p.ridge >= 0.0, "params.ridge", "must be non-negative")?;
            }
            Params::Bench(g) => g.validate().map_err(|e| schema("params", e.to_string()))?,
            Params::Probe(p) => {
                require(p.nodes >= 2, "params.nodes", "must be at least 2")?;
                require(p.nodes - 1 <= p.dim, "params.dim", "needs nodes - 1 <= dim")?;
                require(p.trees > 0, "params.trees", "must be positive")?;
                require(p.null_seeds > 0, "params.null_seeds", "must be positive")?;
            }
            Params::Diffs(p) => {
                require(p.planted.dim > 0, "params.planted.dim", "must be positive")?;
                require(p.planted.relations > 0, "params.planted.relations", "must be positive")?;
                require(p.planted.sequences > 0, "params.planted.sequences", "must be positive")?;
                require(p.planted.tokens_per_sequence >= 2, "params.planted.tokens_per_sequence", "must be at least 2")?;
                require(p.ksvd.atoms > 0, "params.ksvd.atoms", "must be positive")?;
                require(p.ksvd.sparsity > 0, "params.ksvd.sparsity", "must be positive")?;
            }
        }
        Ok(())
    }
}

/// Parse and validate config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let raw: RawConfig = serde_path_to_error::deserialize(&value).map_err(|e| {
        let path = e.path().to_string();
        schema(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })?;
    let cfg = ExperimentConfig {
        seed: raw.seed,
        out: raw.out,
        params: Params::from_value(raw.experiment, &raw.params)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}
