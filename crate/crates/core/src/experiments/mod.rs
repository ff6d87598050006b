//! Seeded experiment runner: configs, text formats, artifacts and manifests.
//!
//! [`run`] writes every artifact of one experiment into the config's output
//! directory, then `manifest.json` listing the SHA-256 of each artifact, the
//! config hash, the seed, the crate version and a few headline metrics.
//! Identical configs produce byte-identical trees at any thread count; wall
//! time is deliberately not recorded because it would break that.

mod config;
pub mod format;
pub mod plot;
mod runners;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    load_config, parse_config, BindParams, DiffsParams, EchoParams, ExperimentConfig, ExperimentTag,
    GenParams, LearnParams, Params, ProbeParams, SteerParams,
};
pub use runners::{
    diffs_run, echo_run, probe_run, steer_run, DiffsOutcome, EchoRow, EchoRun, ProbeOutcome, ECHO_CSV_HEADER,
    SWEEP_CSV_HEADER,
};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Process exit status for an error: 2 for configuration and input-format
/// problems, 1 for I/O failures, 3 for everything numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Format(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_FAILURE,
        _ => EXIT_NUMERICAL,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub experiment: ExperimentTag,
    pub seed: u64,
    pub version: String,
    /// SHA-256 of `config.json`.
    pub config_sha256: String,
    pub headline: BTreeMap<String, f64>,
    /// Artifact name to SHA-256, for every file except the manifest.
    pub files: BTreeMap<String, String>,
}

/// Sole writer of an artifact tree; records each file's hash as it goes.
pub(crate) struct ArtifactWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactWriter {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub(crate) fn put(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub(crate) fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
        self.put(name, text)
    }

    pub(crate) fn put_matrix(&mut self, name: &str, m: &nalgebra::DMatrix<f64>) -> Result<()> {
        self.put(name, format::matrix_to_string(m)?)
    }
}

/// Outcome of a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub manifest: Manifest,
}

/// Run on the current rayon pool.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut writer = ArtifactWriter::create(&cfg.out)?;
    let canonical = cfg.to_canonical_json();
    writer.put(CONFIG_FILE, &canonical)?;
    let headline = runners::dispatch(cfg, &mut writer)?;
    let manifest = Manifest {
        experiment: cfg.tag(),
        seed: cfg.seed,
        version: VERSION.to_string(),
        config_sha256: sha256_hex(canonical.as_bytes()),
        headline,
        files: writer.files.clone(),
    };
    let path = cfg.out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(RunSummary {
        out: cfg.out.clone(),
        manifest,
    })
}

/// Run on a dedicated pool of `threads` workers (`None`: rayon's default).
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunSummary> {
    match threads {
        None => run(cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| run(cfg))
        }
    }
}

/// Problems found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestIssues(pub Vec<String>);

impl ManifestIssues {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Re-check a run directory: the manifest parses, `config.json` parses and
/// matches the recorded hash, experiment and seed, every listed file exists
/// with the recorded hash, no unlisted files exist, and every headline metric
/// is finite.
pub fn validate_manifest(dir: &Path) -> Result<ManifestIssues> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(&p, e))
    };
    let manifest: Manifest = serde_json::from_slice(&read(MANIFEST_FILE)?).map_err(|e| {
        Error::from(crate::error::ConfigError::Parse {
            location: MANIFEST_FILE.into(),
            message: e.to_string(),
        })
    })?;
    let mut issues = Vec::new();
    let config_bytes = read(CONFIG_FILE)?;
    if sha256_hex(&config_bytes) != manifest.config_sha256 {
        issues.push("config hash does not match config.json".to_string());
    }
    match std::str::from_utf8(&config_bytes).map_err(|e| e.to_string()).and_then(|t| parse_config(t).map_err(|e| e.to_string())) {
        Ok(cfg) => {
            if cfg.tag() != manifest.experiment {
                issues.push(format!("experiment {} differs from config {}", manifest.experiment, cfg.tag()));
            }
            if cfg.seed != manifest.seed {
                issues.push(format!("seed {} differs from config {}", manifest.seed, cfg.seed));
            }
        }
        Err(e) => issues.push(format!("config.json does not load: {e}")),
    }
    if manifest.version.is_empty() {
        issues.push("empty version string".into());
    }
    if !manifest.files.contains_key(CONFIG_FILE) {
        issues.push("config.json is not listed".into());
    }
    for (name, hash) in &manifest.files {
        match std::fs::read(dir.join(name)) {
            Ok(bytes) if &sha256_hex(&bytes) == hash => {}
            Ok(_) => issues.push(format!("{name}: hash mismatch")),
            Err(e) => issues.push(format!("{name}: {e}")),
        }
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST_FILE && !manifest.files.contains_key(&name) {
            issues.push(format!("{name}: not listed in the manifest"));
        }
    }
    for (key, value) in &manifest.headline {
        if !value.is_finite() {
            issues.push(format!("headline {key} is not finite"));
        }
    }
    Ok(ManifestIssues(issues))
}

/// SHA-256 of every file in a run directory, by name.
pub fn tree_digest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.insert(entry.file_name().to_string_lossy().into_owned(), sha256_hex(&bytes));
        }
    }
    Ok(out)
}
