//! Crate-wide error type. Variants map onto the CLI exit codes.

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Rejected input: bad parameters, malformed configuration, violated
    /// preconditions.
    #[error("{0}")]
    Validation(String),

    /// The solver or a verification battery failed to meet its tolerances.
    #[error("{0}")]
    Numerical(String),

    /// Underlying filesystem failure.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    /// A file was read but its contents do not match the expected format.
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// Process exit code for the CLI: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 1,
            Error::Numerical(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
