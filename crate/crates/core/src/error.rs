use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("probability must lie in (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),

    #[error("channel estimate has zero norm")]
    ZeroChannel,

    #[error("negative entry in {what}: {value}")]
    NegativeEntry { what: &'static str, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Taylor anchor must be positive, got {0}")]
    NonPositiveAnchor(f64),

    #[error("instance too large for exhaustive search: {assignments} assignments (limit {limit})")]
    InstanceTooLarge { assignments: f64, limit: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
