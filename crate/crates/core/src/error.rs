//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (failed up to jitter {max_jitter:.3e})")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("non-finite state at iteration {iteration}")]
    NonFiniteState { iteration: usize },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate column {0} has zero variance")]
    DegenerateColumn(String),

    #[error("measurement policy error: {0}")]
    Policy(String),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
