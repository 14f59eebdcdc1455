use thiserror::Error;

/// Errors raised anywhere in the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimension must be positive")]
    EmptyMatrix,

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("degenerate covariance: diagonal entry {index} is {value}")]
    DegenerateCovariance { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (last objective {objective:e})")]
    Convergence {
        iterations: usize,
        objective: f64,
        last: Box<crate::precoder::RelaxedSolution>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
