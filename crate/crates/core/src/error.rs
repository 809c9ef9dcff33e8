use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside chart domain: {0}")]
    Domain(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("stability precondition violated: {0}")]
    Stability(String),
    #[error("model validation failed: {0}")]
    ModelValidation(String),
    #[error("dt budget infeasible: {required_steps} steps required (limit {limit})")]
    DtBudget { required_steps: u64, limit: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unregistered function: {0}")]
    Unregistered(String),
    #[error("numerical overflow: {0}")]
    Overflow(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
