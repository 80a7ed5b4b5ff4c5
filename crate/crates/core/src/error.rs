use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Wrong magic, unsupported version or an inconsistent header.
    #[error("format error in {what}: {detail}")]
    Format { what: &'static str, detail: String },

    /// The file ends before the records announced by its header.
    #[error("corrupt {what}: header announces {expected} {unit}, file holds {actual}")]
    Truncated {
        what: &'static str,
        unit: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    OracleMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
