use std::path::PathBuf;

use hyperstroke_core::CoreError;
use hyperstroke_vq::VqError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error("tensor op: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("invalid prompt: {0}")]
    Prompt(String),
    #[error("request needs {needed} positions but the context holds {capacity}")]
    Capacity { needed: usize, capacity: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label/position misalignment: {0}")]
    Misaligned(String),
    #[error("non-finite loss at step {0}")]
    NonFinite(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no training data")]
    EmptyDataset,
}

pub type Result<T, E = SeqError> = std::result::Result<T, E>;

impl SeqError {
    pub(crate) fn checkpoint(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        SeqError::Checkpoint {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
