use dacoop_core::Error as CoreError;
use thiserror::Error;

/// Failures grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments or input files. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// Non-finite values or a simulation fault during a run. Exit code 3.
    #[error("{0}")]
    Numeric(String),
    /// Checkpoint does not fit the requested use. Exit code 4.
    #[error("{0}")]
    Incompatible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Incompatible(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Incompatible(_) | CoreError::Checkpoint(_) => CliError::Incompatible(msg),
            CoreError::Parse { .. }
            | CoreError::InvalidArena(_)
            | CoreError::InvalidParameter(_)
            | CoreError::EmptyEvaluation
            | CoreError::SpawnInfeasible { .. }
            | CoreError::Io(_) => CliError::Config(msg),
            _ => CliError::Numeric(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
