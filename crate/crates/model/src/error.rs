use abn_numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint checksum mismatch in {0}")]
    Checksum(String),
}

impl From<abn_scenegen::SceneError> for ModelError {
    fn from(e: abn_scenegen::SceneError) -> Self {
        ModelError::InvalidArgument(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ModelError::InvalidArgument(msg.into()))
}
