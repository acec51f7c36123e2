use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dataset exhausted by filter")]
    Exhausted,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} out of range: {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("divergence: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("hessian block is numerically singular (condition estimate {condition:.3e}); increase damping")]
    Singular { condition: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics (divergence, singular solves) rather than input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::Singular { .. })
    }
}
