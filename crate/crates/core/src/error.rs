use std::io;
use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid observation {0}: values must be finite")]
    InvalidObservation(f64),

    #[error("summary is empty")]
    EmptySummary,

    #[error("input is empty")]
    EmptyInput,

    #[error("velocity window must have {expected} daily values, got {got}")]
    InvalidWindow { expected: usize, got: usize },

    #[error("at least two observations are required")]
    InsufficientData,

    #[error("ratio is undefined: {0}")]
    UndefinedRatio(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("insufficient ground truth: {0}")]
    InsufficientGroundTruth(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("schema error in {path}: missing column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unsupported command: `{verb}` is not available for {object}")]
    Unsupported {
        verb: &'static str,
        object: &'static str,
    },

    #[error("invalid key: {0}")]
    Key(String),

    #[error("storage error at `{key}`: {source}")]
    Storage {
        key: String,
        #[source]
        source: io::Error,
    },

    #[error("corrupt document at `{key}`: {source}")]
    Document {
        key: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
