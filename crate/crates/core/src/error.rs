use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    Dimension(String),
    #[error("mass {found} differs from declared {declared}")]
    Mass { declared: f64, found: f64 },
    #[error("singular support: mu > 0 where nu = 0 at r = {0}")]
    SingularSupport(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("energy unbounded below: k = 0 with omega < 0")]
    Unbounded,
    #[error("basis dimension {dim} exceeds budget {budget}")]
    Resource { dim: usize, budget: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
