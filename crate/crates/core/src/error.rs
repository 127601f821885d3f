use std::path::PathBuf;

/// Errors raised by the simulator and its oracles.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("admissibility gate violated: {0}")]
    Gate(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("kernel window too small: tail mass {tail:.3e} exceeds {limit:.3e}")]
    KernelWindow { tail: f64, limit: f64 },

    #[error("circulant embedding failed: {0}")]
    Embedding(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("not converged: {0}")]
    Unconverged(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
