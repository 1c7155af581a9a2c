use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("weight ({layer}, {row}, {col}) is masked")]
    MaskedWeight { layer: usize, row: usize, col: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("degenerate feature vector (norm {0:e})")]
    DegenerateFeature(f64),

    #[error("class direction {0} has zero norm")]
    ZeroClassDirection(usize),

    #[error("class directions {0} and {1} coincide; decision boundary undefined")]
    CoincidentDirections(usize, usize),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("unknown corruption type '{0}'")]
    UnknownCorruption(String),

    #[error("severity {0} out of range 1..=5")]
    Severity(u8),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("content hash mismatch for {path}: expected {expected}, found {found}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("duplicate id '{0}'")]
    Duplicate(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("unknown sample id {0}")]
    UnknownSample(u64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
