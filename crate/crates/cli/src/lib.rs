//! Library backing the `cogs` binary: experiment configuration plus the
//! four commands (generate-dataset, solve, evaluate, report).

pub mod commands;
pub mod spec;

use std::fmt;

/// Command failures, split by exit code: configuration problems exit 2,
/// missing or inconsistent artifacts exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Artifact(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn artifact(msg: impl Into<String>) -> Self {
        CliError::Artifact(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Artifact(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Artifact(msg) => write!(f, "artifact error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cogs_core::CogsError> for CliError {
    fn from(e: cogs_core::CogsError) -> Self {
        use cogs_core::CogsError::*;
        match &e {
            InvalidConfig(_) | DimensionMismatch(_) | GameTooLarge(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Artifact(e.to_string()),
        }
    }
}
