use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("operator is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("outcome has no support (F0 = {prob:e})")]
    DegenerateOutcome { prob: f64 },
    #[error("phase policy does not fit the outcome: {0}")]
    Arity(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("quadrature grid too small: {grid} nodes, need more than {needed}")]
    GridTooSmall { grid: usize, needed: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
