use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no rows")]
    NoRows,

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },

    #[error("target column `{0}` not found")]
    MissingTarget(String),

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("partition `{0}` would be empty")]
    EmptyPartition(&'static str),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in soft evaluation at node {node}")]
    NonFinite { node: usize },

    #[error("R² is undefined for a constant target")]
    UndefinedR2,

    #[error("every training start failed")]
    AllStartsFailed,

    #[error("every depth in the grid failed to train")]
    AllDepthsFailed,

    #[error("score table has missing entries")]
    MissingEntries,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
