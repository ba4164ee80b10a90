use thiserror::Error;
use urf_core::UrfError;

/// Failures mapped onto the process exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),

    #[error("certificate failed: {0}")]
    Certificate(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Core(#[from] UrfError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Certificate(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Core(UrfError::InvalidArgument(_))
            | CliError::Core(UrfError::DegenerateConfiguration(_))
            | CliError::Core(UrfError::InvalidHyperparameters(_)) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}
