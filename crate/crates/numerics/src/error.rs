use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("training diverged: {0}")]
    Divergence(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(NumericsError::InvalidArgument(msg.into()))
}
