use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrfError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("unstable system: {0}")]
    Unstable(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, UrfError>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::UrfError::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid;
