use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, ranges or option combinations that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value left the real domain of an operation (division by zero,
    /// fractional power of a negative number, zero deflation distance).
    #[error("numeric-domain error: {0}")]
    NumericDomain(String),

    /// A non-finite value appeared while assembling or stepping a loss.
    #[error("training error at iteration {iteration}: {message}")]
    Training { iteration: usize, message: String },

    /// The tape was used in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("unknown {kind} '{name}'")]
    NotFound { kind: &'static str, name: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::NumericDomain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Attach an iteration index to numeric failures raised inside a training step.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::NumericDomain(m) | Error::Config(m) => Error::Training {
                iteration,
                message: m,
            },
            Error::Training { message, .. } => Error::Training { iteration, message },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
