use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke an interface contract (shape mismatch, action out of range, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Invalid or unparseable configuration.
    #[error("config error: {0}")]
    Config(String),
    /// An index past the end of a series.
    #[error("index error: {0}")]
    Index(String),
    /// A loss or gradient became non-finite during training.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
