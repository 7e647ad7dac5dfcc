use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("parse error: {0}")]
    Parse(String),
    /// Certified summation could not reach the requested accuracy within
    /// the configured number of terms.
    #[error("term budget exceeded: {0}")]
    Budget(String),
    #[error("representation mismatch: {0}")]
    Unrepresentable(String),
    #[error("{0}")]
    Certification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
