use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: non-finite value {value} at index {index}")]
    InvalidField { index: usize, value: f64 },

    #[error("positivity violation: value {value} at index {index}")]
    Positivity { index: usize, value: f64 },

    #[error("degenerate field: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("path failure at t = {time}: {reason}")]
    PathFatal { time: f64, reason: String },

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
