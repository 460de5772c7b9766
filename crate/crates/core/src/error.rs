use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature grid mismatch ({0} vs {1} nodes)")]
    GridMismatch(usize, usize),

    #[error("Neumann data is not mean free (integral {0:.3e})")]
    NotMeanFree(f64),

    #[error("linear system is singular or not positive definite: {0}")]
    Singular(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("rank deficient: need {required} independent patterns, found {rank}")]
    RankDeficient { required: usize, rank: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
