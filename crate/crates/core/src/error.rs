use thiserror::Error;

/// Errors raised by mesh construction, assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported domain tag `{0}` (expected `unit-square` or `l-shape`)")]
    UnsupportedDomain(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("spatial solve did not converge at time step {step}: residual {final_residual:e} after {iterations} iterations")]
    StepNotConverged {
        step: usize,
        iterations: usize,
        final_residual: f64,
    },

    #[error("spatial solve did not converge: residual {final_residual:e} after {iterations} iterations")]
    SolveNotConverged {
        iterations: usize,
        final_residual: f64,
    },

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
