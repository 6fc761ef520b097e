use std::io;

use thiserror::Error;

/// Errors raised anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("error bound {tau} is infeasible: must exceed {threshold} (sqrt(n) * a / (2b))")]
    InfeasibleBound { tau: f64, threshold: f64 },

    #[error("degenerate value range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },

    #[error("{0}")]
    Format(String),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("missing block at origin {0:?}")]
    MissingBlock([usize; 4]),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleBound { .. } => 3,
            _ => 2,
        }
    }
}
