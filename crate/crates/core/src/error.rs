use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a physical or structural integrity rule.
    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("sequence too short: need {required} frames, got {actual}")]
    SequenceTooShort { required: usize, actual: usize },

    #[error("archive {path}: {reason}")]
    Archive { path: PathBuf, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training: {0}")]
    Training(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
