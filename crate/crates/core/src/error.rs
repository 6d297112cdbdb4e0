use thiserror::Error;

/// Errors raised by the solvers, transforms and file readers.
#[derive(Debug, Error)]
pub enum LipdError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("truncation risk: {0}")]
    Truncation(String),
    #[error("quadrature did not converge: {0}")]
    Accuracy(String),
    #[error("unstable configuration: {0}")]
    Stability(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("problem too large: {0}")]
    Size(String),
    #[error("exponential weight overflow: {0}")]
    Overflow(String),
    #[error("singular solve: {0}")]
    Singular(String),
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LipdError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LipdError::Domain(msg.into()))
}
