use std::process::ExitCode;

use thiserror::Error;

/// A failed command; each variant maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Runtime failure, or a verification threshold that was not met.
    #[error("{0}")]
    Failed(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Failed(_) => 1,
            Self::Trajectory(_) => 2,
            Self::Config(_) => 3,
        })
    }

    /// Reading and checking inputs: everything but a trajectory error is a config error.
    pub fn from_setup(e: hmpc_core::Error) -> Self {
        match e {
            hmpc_core::Error::Trajectory(m) => Self::Trajectory(m),
            other => Self::Config(other.to_string()),
        }
    }

    pub fn from_run(e: hmpc_core::Error) -> Self {
        match e {
            hmpc_core::Error::Trajectory(m) => Self::Trajectory(m),
            other => Self::Failed(other.to_string()),
        }
    }

    pub fn io(what: &str, e: impl std::fmt::Display) -> Self {
        Self::Failed(format!("{what}: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
