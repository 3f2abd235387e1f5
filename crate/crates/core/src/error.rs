use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("format error in {section} at byte {offset}: {message}")]
    Format {
        section: String,
        offset: u64,
        message: String,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("architecture error at layer {layer}: {message}")]
    Spec { layer: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn format(section: impl Into<String>, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            section: section.into(),
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Format { .. }
            | Error::Spec { .. }
            | Error::Io { .. } => 2,
            Error::Numeric(_) | Error::InvalidState(_) => 3,
            Error::UndefinedMetric(_) => 4,
        }
    }
}
