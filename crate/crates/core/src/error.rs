//! Error types shared across the crate.
//!
//! Shape and dimension violations inside the numeric kernels are programmer
//! errors and panic with a message naming both shapes; everything reachable
//! from user input (files, configs, training data) returns one of the enums
//! below.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading, masking, splitting, or scaling sequence data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("sequence too short: need at least {needed} slots, found {found}")]
    SequenceTooShort { needed: usize, found: usize },
    #[error("missingness ratio {0} outside [0, 1]")]
    InvalidRatio(f64),
    #[error("missingness injection requires a fully observed sequence ({missing} slots already missing)")]
    AlreadyMasked { missing: usize },
    #[error("noise standard deviation {0} is negative")]
    NegativeNoise(f64),
    #[error("scaler fitted on a training set with no present inputs")]
    EmptyTrainSet,
    #[error("input width mismatch: sequence has {found} features, expected {expected}")]
    WidthMismatch { expected: usize, found: usize },
}

/// Errors raised when validating a model configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("window length {0} outside supported range [1, 12]")]
    InvalidWindow(usize),
    #[error("hidden size and input size must be at least 1 (q={q}, m={m})")]
    InvalidSizes { q: usize, m: usize },
    #[error("leaf index {index} outside [1, {max}) for window length {l}")]
    LeafIndexOutOfRange { index: usize, max: usize, l: usize },
    #[error("bptt horizon must be at least 1")]
    InvalidHorizon,
    #[error("initialization variance {0} must be positive")]
    InvalidVariance(f64),
    #[error("pattern string {0:?} is not a run of '0'/'1' characters")]
    BadPattern(String),
    #[error("window length mismatch when growing: source has L={from}, target needs L={to}")]
    GrowMismatch { from: usize, to: usize },
}

/// Errors raised while reading or writing model checkpoints.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint is not valid JSON: {0}")]
    Corrupt(String),
    #[error("checkpoint format version {found} not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checkpoint field {field}: expected shape {expected}, found {found}")]
    ShapeMismatch {
        field: String,
        expected: String,
        found: String,
    },
    #[error("checkpoint kind {found:?} does not match requested {expected:?}")]
    KindMismatch { expected: String, found: String },
    #[error("checkpoint contains a non-finite weight in {0}")]
    NonFinite(String),
}

/// Errors raised by the training and cross-validation loops.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epoch {epoch}: non-finite {what}; aborting before the update")]
    NonFinite { epoch: usize, what: String },
    #[error("no defined targets in the evaluated range")]
    NoTargets,
    #[error("fold {fold} has {len} slots, below the minimum {min}")]
    FoldTooShort { fold: usize, len: usize, min: usize },
    #[error("cross-validation grids must be nonempty")]
    EmptyGrid,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
