use std::path::PathBuf;

use thiserror::Error;
use voltguard::agents::AgentError;
use voltguard::env::EnvError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("data {path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl HarnessError {
    /// Process exit status: 2 for bad input (config, data, arguments), 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config { .. }
            | HarnessError::Data { .. }
            | HarnessError::MissingCheckpoint(_)
            | HarnessError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
