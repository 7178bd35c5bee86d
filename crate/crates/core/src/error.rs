use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires a {expected} space")]
    WrongSpaceKind { expected: &'static str },

    #[error("linear solver stalled after {iterations} iterations, residual {residual:.3e}")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("right-hand side is not consistent with the matrix kernel")]
    KernelInconsistent,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error(
        "fixed point iteration did not converge after {iterations} iterations, \
         last update {last_update:.3e}"
    )]
    FixedPointDiverged {
        iterations: usize,
        last_update: f64,
        last_iterate: Vec<f64>,
    },

    #[error("non-finite value in state vector")]
    NonFinite,

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
