use abn_eval::EvalError;
use abn_model::ModelError;
use abn_numerics::NumericsError;
use abn_scenegen::SceneError;
use abn_training::TrainError;

/// Failure categories, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    UnsupportedVariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidArgument(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::UnsupportedVariant(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::InvalidArgument(msg.into()))
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::InvalidArgument(format!("manifest: {e}"))
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::InvalidArgument(_) | SceneError::ScenarioGeneration(_) => {
                CliError::InvalidArgument(e.to_string())
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::InvalidArgument(_) => CliError::InvalidArgument(e.to_string()),
            _ => CliError::Divergence(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidArgument(_) => CliError::InvalidArgument(e.to_string()),
            ModelError::UnsupportedVariant(_) => CliError::UnsupportedVariant(e.to_string()),
            ModelError::Numerics(n) => n.into(),
            ModelError::Io(_) | ModelError::Checkpoint(_) | ModelError::Checksum(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidArgument(_) => CliError::InvalidArgument(e.to_string()),
            TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Scene(s) => s.into(),
            TrainError::Numerics(n) => n.into(),
            TrainError::Io(_) | TrainError::Csv(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidArgument(_) => CliError::InvalidArgument(e.to_string()),
            EvalError::Model(m) => m.into(),
            EvalError::Scene(s) => s.into(),
            EvalError::Numerics(n) => n.into(),
            EvalError::Io(_) | EvalError::Csv(_) => CliError::Io(e.to_string()),
        }
    }
}
