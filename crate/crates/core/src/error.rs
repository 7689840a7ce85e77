use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("row {row}: no MAC within shift range for column {col}")]
    InfeasibleAssignment { row: usize, col: usize },

    #[error("assignment does not match weights: {0}")]
    AssignmentMismatch(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing cost coefficient for design `{0}`")]
    MissingCoefficient(String),

    #[error("zero cycles")]
    ZeroCycles,

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
