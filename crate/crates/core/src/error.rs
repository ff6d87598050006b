use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the testbed's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid probability {0}: must lie in [0, 1]")]
    InvalidProbability(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid rank {rank} for dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },
    #[error("degenerate cue: norm {0:e} is too small to unbind with")]
    DegenerateCue(f64),
    #[error("singular spectrum: Fourier coefficient {index} has magnitude {magnitude:e}")]
    SingularSpectrum { index: usize, magnitude: f64 },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("invalid node {node} (tree has {count} nodes)")]
    InvalidNode { node: usize, count: usize },
    #[error("insufficient dimension: need {needed}, have {have}")]
    InsufficientDimension { needed: usize, have: usize },
    #[error("rank-deficient design: {0}")]
    RankDeficientDesign(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("too few tokens: need at least {needed}, have {have}")]
    TooFewTokens { needed: usize, have: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("insufficient atoms: need at least {needed}, have {have}")]
    InsufficientAtoms { needed: usize, have: usize },
    #[error("construction failure: {0}")]
    ConstructionFailure(String),
    #[error("single-class data: every label is {0}")]
    SingleClassData(u8),
    #[error("direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("no positive-label samples to steer")]
    EmptyPositiveSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Errors from the MAT1 / BVEC1 text formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("bad token {token:?} on line {line}")]
    BadToken { token: String, line: usize },
    #[error("count mismatch: expected {expected} values, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

/// Configuration loading and validation errors.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error came from configuration (as opposed to numerics or I/O).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
