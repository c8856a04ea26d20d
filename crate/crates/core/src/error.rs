use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or non-finite input values.
    #[error("invalid input: {0}")]
    Input(String),

    /// Too few samples, or operands whose shapes disagree.
    #[error("size error: {0}")]
    Size(String),

    /// Constant columns, zero-trace kernels and similar data that carry no
    /// information for the requested statistic.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// An inner error with the location (variable pair, conditioning set,
    /// trial, ...) at which it happened.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.root(), Error::DegenerateData(_))
    }
}
