use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A syntactically malformed input record.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// Well-formed input that violates a data-model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    /// Binary artifact (checkpoint, pool, cache) that cannot be decoded.
    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("embedding backend error (column {column:?}): {message}")]
    Embedding {
        column: Option<usize>,
        message: String,
        retryable: bool,
    },

    #[error("training aborted at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("{model} model cannot be used here: {message}")]
    Unsupported { model: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors caused by bad user input (as opposed to runtime failures).
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::InvalidArgument(_)
                | Error::MissingFile(_)
                | Error::Format(_)
                | Error::Unsupported { .. }
        )
    }

    pub fn with_column(self, index: usize) -> Self {
        match self {
            Error::Embedding {
                message, retryable, ..
            } => Error::Embedding {
                column: Some(index),
                message,
                retryable,
            },
            other => other,
        }
    }
}
