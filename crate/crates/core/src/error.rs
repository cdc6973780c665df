use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate kernel: all taps are zero")]
    DegenerateKernel,

    #[error("non-finite value encountered in {0}")]
    NumericalFailure(&'static str),

    #[error("dimension {0} exceeds the dense materialization limit {1}")]
    TooLarge(usize, usize),

    #[error("oracle did not converge: {0}")]
    OracleNotConverged(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
