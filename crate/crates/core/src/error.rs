use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),

    #[error("state {mask:#b} is not an independent set")]
    NotIndependent { mask: u32 },

    #[error("state {mask:#b} is not a maximal independent set")]
    NotMaximal { mask: u32 },

    #[error("penalty coefficient must exceed 1, got {0}")]
    InvalidCoefficient(f64),

    #[error("invalid driver field: {0}")]
    InvalidDriver(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("eigensolver did not converge at lambda = {lambda}: residual {residual:.3e}")]
    NonConvergence { lambda: f64, residual: f64 },

    #[error("tracking ambiguity: {0}")]
    TrackingAmbiguity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
