use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate date {0}")]
    DuplicateDate(chrono::NaiveDate),

    #[error("empty headline list")]
    EmptyHeadlines,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing embedding for key {0}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("near-zero norm {0:e} cannot be normalized")]
    ZeroNorm(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
