use thiserror::Error;

/// Errors produced by dataset construction, ingestion, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {problem}")]
    Csv { path: String, problem: String },

    #[error("missing or non-numeric values: {0}")]
    MissingValues(String),

    #[error("solver input: {0}")]
    SolverInput(String),

    #[error("tree {0} has no out-of-bag instances")]
    NoOob(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
