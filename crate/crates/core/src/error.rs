use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum NahError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("field is identically zero")]
    DegenerateField,

    #[error("reference vector is zero on the evaluation mask")]
    ZeroReference,

    #[error("coincident source and receiver points")]
    SingularGreen,

    #[error("no plate mode at or below {limit_hz} Hz")]
    EmptyModeSet { limit_hz: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("bad magic in tensor container")]
    BadMagic,

    #[error("unsupported container version {0}")]
    BadVersion(u8),

    #[error("unknown quantity tag {0}")]
    BadQuantity(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("shape {rows}x{cols} overflows the addressable payload")]
    ShapeOverflow { rows: u32, cols: u32 },

    #[error("manifest inconsistent with sample files: {0}")]
    InconsistentManifest(String),

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<NahError>,
    },

    #[error("backward called on a tensor that is not the output of a recorded operation")]
    NoGraph,

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("frequency mismatch: propagator built for {propagator} rad/s, sample at {sample} rad/s")]
    FrequencyMismatch { propagator: f64, sample: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("empty input")]
    EmptyInput,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl NahError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NahError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        NahError::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NahError>;
