use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scenario generation failed: {0}")]
    ScenarioGeneration(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a dataset file (bad magic bytes)")]
    BadMagic,
    #[error("dataset format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("dataset truncated while reading {0}")]
    Truncated(String),
    #[error("checksum mismatch in record {record}")]
    Checksum { record: usize },
    #[error("malformed dataset header: {0}")]
    Header(String),
}

pub type Result<T> = std::result::Result<T, SceneError>;
