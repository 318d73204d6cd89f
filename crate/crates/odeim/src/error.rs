use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeimError {
    #[error("invalid algebra label: {0}")]
    InvalidLabel(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, OdeimError>;
