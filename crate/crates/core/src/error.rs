use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("poisson mask did not converge: target fraction {target:.4}, achieved {achieved:.4}")]
    MaskNotConverged { target: f64, achieved: f64 },

    #[error("{path}: bad magic bytes {found:?}, expected \"DMT1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: truncated {what}: need {needed} bytes, have {available}")]
    Truncated {
        path: PathBuf,
        what: &'static str,
        needed: u64,
        available: u64,
    },

    #[error("{path}: shape {dims:?} overflows addressable size")]
    ShapeOverflow { path: PathBuf, dims: Vec<u32> },

    #[error("{path}: unsupported tensor format: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
