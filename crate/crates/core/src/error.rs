//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error categories used across the crate. Each category maps to a distinct
/// process exit code so batch drivers can dispatch on failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter value (bad config, degenerate input).
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Shape or grid mismatch between operands.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// File or stream failure, including malformed on-disk artifacts.
    #[error("i/o error: {0}")]
    Io(String),
    /// Numerical solver failure (singular system, non-convergence).
    #[error("solver error: {0}")]
    Solver(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Dimension(_) => "dimension",
            Error::Io(_) => "io",
            Error::Solver(_) => "solver",
        }
    }

    /// Stable nonzero exit code per category (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) => 2,
            Error::Dimension(_) => 3,
            Error::Io(_) => 4,
            Error::Solver(_) => 5,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
