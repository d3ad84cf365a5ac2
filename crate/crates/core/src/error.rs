use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite margin")]
    NonFiniteMargin,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("batch size {b} out of range for n = {n}")]
    BatchOutOfRange { b: usize, n: usize },

    #[error("lazy path requires linear loss + elastic net")]
    LazyUnsupported,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("objective diverged at stage {stage}")]
    Diverged { stage: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
