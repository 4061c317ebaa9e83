use std::path::PathBuf;

/// Errors produced by slicekit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// SW₂ is (numerically) zero, so the gradient of SW₂ is undefined.
    #[error("degenerate gradient: SW2 value {0:e} is below the 1e-12 guard")]
    DegenerateGradient(f64),

    #[error("kernel matrix is ill-conditioned: factorization failed at jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("{what} of size {size} exceeds the exact-solver limit {limit}; use the sw-highL evaluation mode")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
