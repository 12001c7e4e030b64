use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: field has {actual} points, grid has {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidKey { key: String, reason: String },

    #[error("potential is not real-valued: sample {index} has imaginary part {imag:e}")]
    NonRealPotential { index: usize, imag: f64 },

    #[error("non-finite value in field at step {step}")]
    NonFinite { step: usize },

    #[error("slope fit refused: {0}")]
    FitRefused(String),

    #[error("{failed} of {total} samples failed, exceeding the 5% limit")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn key(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidKey {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
