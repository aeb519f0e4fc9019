use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("infeasible graph: {0}")]
    Infeasible(String),

    #[error("no valid model after {attempts} draws (seed {seed})")]
    RetriesExhausted { seed: u64, attempts: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("model is not pairwise normalizable (lambda_max = {lambda_max})")]
    NotPairwiseNormalizable { lambda_max: f64 },

    #[error("message initialization does not fit the partition: {0}")]
    SchemeMismatch(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
