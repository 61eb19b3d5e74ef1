use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("stream out of order at index {index}: {prev_ps} ps followed by {next_ps} ps")]
    StreamOrder { index: usize, prev_ps: u64, next_ps: u64 },

    #[error("unfittable fringe data: {0}")]
    Unfittable(String),

    #[error("measurement set is not informationally complete (rank {rank} < 16)")]
    IncompleteData { rank: usize },

    #[error("maximum-likelihood reconstruction did not converge after {iterations} iterations (last improvement {last_improvement:e})")]
    NotConverged {
        iterations: usize,
        last_improvement: f64,
        /// Final iterate, still a valid density matrix.
        last_iterate: Box<crate::linalg::Mat4<f64>>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.into(), reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
