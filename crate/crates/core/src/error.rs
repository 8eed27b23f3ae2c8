use thiserror::Error;

/// Errors produced by the auction-learning library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("permutation size {0} out of supported range 1..=8")]
    PermutationSize(usize),
    #[error("budget exceeded: needed {needed}, budget {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
