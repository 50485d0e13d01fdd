use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical core, the data pipeline and the model code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("kernel of length {kernel} does not fit a sequence of length {length}")]
    Length { kernel: usize, length: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("batch norm needs at least 2 samples per feature in train mode, got {0}")]
    DegenerateBatch(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("nondeterministic objective: two evaluations gave {first} and {second}")]
    Nondeterministic { first: f64, second: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown lab code {0:?}")]
    UnknownLab(String),

    #[error("container format error: {0}")]
    Format(String),

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

pub type Result<T> = std::result::Result<T, Error>;
