//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by basis construction, sampling, detection, and I/O.
#[derive(Debug, Error)]
pub enum SidError {
    /// Invalid user-facing configuration (unknown system, bad degree, bad ranges).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Requested basis would exceed the supported size cap.
    #[error("basis with d={d}, degree={degree} has {size} terms, exceeding the cap of {cap}")]
    BasisTooLarge {
        d: usize,
        degree: u32,
        size: usize,
        cap: usize,
    },

    /// Numerical failure (SVD non-convergence, degenerate geometry, rank inconsistency).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Field evaluation failed at a specific sample point.
    #[error("field evaluation failed at sample point {index}: {reason}")]
    FieldEvaluation { index: usize, reason: String },

    /// The rejection sampler discarded more than half of its draws.
    #[error("sampler rejected {rejected} of {attempts} draws; domain too degenerate")]
    SamplerDegenerate { rejected: usize, attempts: usize },

    /// Adaptive integration step size underflowed, typically due to stiffness.
    #[error("integration step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    /// Entropy of the zero vector is undefined.
    #[error("entropy of the zero vector is undefined")]
    ZeroVector,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SidError>;

impl SidError {
    /// Attach a path to a raw I/O error.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SidError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
