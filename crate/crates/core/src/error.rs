use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hidden layer too large for exact enumeration: {hidden} > {max}")]
    EnumerationBudget { hidden: usize, max: usize },

    #[error("model has no exact log-partition function")]
    NoExactPartition,

    #[error("finite-difference step {0:e} is too small")]
    StepTooSmall(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at iteration {iteration}: non-finite parameters")]
    Diverged { iteration: usize },

    #[error(transparent)]
    Idx(#[from] crate::data_io::IdxError),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
