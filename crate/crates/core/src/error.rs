use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The state contradicts every structurally valid ground-truth image.
    #[error("state is consistent with no valid ground-truth image")]
    InconsistentState,

    /// Every question has already been asked.
    #[error("question set exhausted")]
    Exhausted,

    /// A strategy or caller broke an interface contract.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A data file failed validation; `row` is 1-based and excludes the header.
    #[error("schema violation at row {row}: {message}")]
    SchemaViolation { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
