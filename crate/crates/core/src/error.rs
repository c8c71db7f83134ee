use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the mathematical domain of a formula
    /// (non-positive distance, non-positive noise power, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller passed an invalid argument (bad index, empty list, dimension mismatch).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Training or evaluation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Reading inputs or writing outputs failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
