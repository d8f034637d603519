use std::path::PathBuf;

/// Errors produced by the field, kernel, flux, balance and solver layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in component {component} at index {index}")]
    NonFinite { component: usize, index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported quadrature order {requested} for d={dim}; maximum supported order is {max}")]
    UnsupportedOrder {
        dim: usize,
        requested: usize,
        max: usize,
    },

    #[error("point outside the identity domain: {0}")]
    Domain(String),

    #[error("malformed field file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CFL violation at step {step}: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { step: u64, dt: f64, limit: f64 },

    #[error("non-finite solver state at step {step}")]
    Blowup { step: u64 },

    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("json export failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
