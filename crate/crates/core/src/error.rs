use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// An invariant of an internal algorithm was violated. Always a bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
