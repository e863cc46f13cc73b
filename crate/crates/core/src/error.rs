use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// The construction needs a finer tower than the configured depth limit allows.
    #[error("infeasible breadth: required depth {required} exceeds depth limit {limit} ({detail})")]
    InfeasibleBreadth { required: u32, limit: u32, detail: String },

    /// A cocycle is not constant on some cell at the available resolution.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("inconsistent cocycle: {0}")]
    InconsistentCocycle(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("search budget exceeded: {0}")]
    SearchBudget(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
