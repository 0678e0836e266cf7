use abn_model::ModelError;
use abn_numerics::NumericsError;
use abn_scenegen::SceneError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(EvalError::InvalidArgument(msg.into()))
}
