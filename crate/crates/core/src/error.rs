use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid modulus: {0}")]
    InvalidModulus(String),
    #[error("refinement error: {0}")]
    Refinement(String),
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),
    #[error("level {level} out of range (chain has {len} levels)")]
    LevelOutOfRange { level: usize, len: usize },
    #[error("needs more levels: {condition} failed at level {level}")]
    NeedsMoreLevels { condition: String, level: usize },
    #[error("augmentation error: {0}")]
    Augmentation(String),
    #[error("construction defect: {0}")]
    ConstructionDefect(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fillability error at level {level}, column {column}: {reason}")]
    Fillability {
        level: usize,
        column: usize,
        reason: String,
    },
    #[error("multiplicity error at level {level}, column {column}")]
    Multiplicity { level: usize, column: usize },
    #[error("not witnessed: {0}")]
    NotWitnessed(String),
    #[error("factorization error: {0}")]
    Factorization(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("condition C1 violated: {0}")]
    C1Violation(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
