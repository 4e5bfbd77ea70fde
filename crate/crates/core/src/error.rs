use thiserror::Error;

/// Errors surfaced by the game-solving pipeline.
#[derive(Debug, Error)]
pub enum CogsError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("policy returned illegal action {action} at step {step}")]
    IllegalAction { step: usize, action: usize },

    #[error("step called on a terminal state")]
    TerminalStep,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset is empty or unusable: {0}")]
    EmptyDataset(String),

    #[error("game too large for exact search: {0}")]
    GameTooLarge(String),

    #[error("configuration/artifact hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("incomplete artifacts: {0}")]
    IncompleteArtifacts(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CogsError>;
