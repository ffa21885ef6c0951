use thiserror::Error;

/// Errors raised by the inference toolkit.
///
/// The variants double as the error classes reported by the command-line
/// front end, so every variant maps onto a stable machine-readable name.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Arguments that do not fit together (shape or family mismatch).
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed input text at a known line.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Well-formed input that violates a data invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// Operation on an empty observation store.
    #[error("empty database")]
    EmptyDatabase,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Usage(_) => "usage",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::EmptyDatabase => "empty-database",
            Error::Io(_) => "io",
            Error::Serde(_) => "serialization",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
