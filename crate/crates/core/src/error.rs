use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("noise coefficient at level {level} is {lambda:e}, below the invertibility cutoff")]
    IllPosed { level: usize, lambda: f64 },

    #[error("quadrature grid with {n_theta} nodes in cos(theta) cannot resolve level {level} (needs at least {needed})")]
    Resolution {
        n_theta: usize,
        level: usize,
        needed: usize,
    },

    #[error("angle density is negative ({value:e}) at theta = {theta}")]
    NegativeDensity { theta: f64, value: f64 },

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("observation {index} lies outside the covered region (coverage weight {weight:e})")]
    OutsideCoverage { index: usize, weight: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
