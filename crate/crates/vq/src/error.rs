use std::path::PathBuf;

use hyperstroke_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VqError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("tensor op: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token {index} out of range for codebook of {size}")]
    TokenRange { index: u32, size: usize },
    #[error("non-finite loss at step {step}; batch dumped to {dump}")]
    NonFinite { step: usize, dump: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no training data")]
    EmptyDataset,
}

pub type Result<T, E = VqError> = std::result::Result<T, E>;

impl VqError {
    pub(crate) fn checkpoint(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        VqError::Checkpoint {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
