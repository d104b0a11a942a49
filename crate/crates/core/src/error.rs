use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("value {value} at line {line} is outside the accepted range [{min}, {max}]")]
    Range {
        line: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("insufficient replication: {0}")]
    InsufficientReplication(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix not positive definite after jitter levels {jitters:?} ({context})")]
    Conditioning { context: String, jitters: Vec<f64> },

    #[error("degrees of freedom must be positive: {0}")]
    DegreesOfFreedom(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. } | Error::Estimation(_) | Error::DegreesOfFreedom(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
