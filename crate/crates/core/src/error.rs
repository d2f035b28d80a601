use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or matrix sizes do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An argument lies outside the domain of a mathematical operator.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data is unusable (non-finite values, empty images).
    #[error("invalid input: {0}")]
    Input(String),

    /// A condition that construction should have ruled out.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
