use thiserror::Error;

use simcoder_core::agent::task::TaskError;
use simcoder_core::agent::{AgentError, ProviderError, SandboxError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Failures(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("sandbox error: {0}")]
    Sandbox(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failures(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Simulation(_) => 4,
            CliError::Provider(_) => 5,
            CliError::Sandbox(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<SandboxError> for CliError {
    fn from(e: SandboxError) -> Self {
        match e {
            SandboxError::Profile(_) => CliError::Parse(e.to_string()),
            SandboxError::SandboxUnavailable(_) => CliError::Sandbox(e.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Sandbox(s) => s.into(),
            AgentError::Io { .. } => CliError::Io(e.to_string()),
            AgentError::Prompt(_) => CliError::Parse(e.to_string()),
            AgentError::ZeroBudget => CliError::Usage(e.to_string()),
        }
    }
}
