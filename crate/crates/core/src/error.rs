use thiserror::Error;

/// Errors shared by the model, preprocessing, and solver modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violated its documented range.
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig {
        field: &'static str,
        reason: String,
    },

    /// An argument fell outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input was structurally valid but carries no usable signal.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Vector lengths disagree.
    #[error("size mismatch: expected length {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    /// Tridiagonal elimination hit a zero pivot.
    #[error("singular system: zero pivot at row {row}")]
    Singular { row: usize },

    /// A weight that must be strictly positive was not; the iterate has left
    /// the feasible interior.
    #[error("infeasible iterate: {0}")]
    Infeasible(String),

    /// The solver produced a non-finite quantity.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
