use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("unsupported for {kind}: {what}")]
    UnsupportedKind { kind: &'static str, what: &'static str },

    #[error("step {step} failed: condition estimate {condition:.3e}, residual {residual:.3e}")]
    StepFailure {
        step: usize,
        condition: f64,
        residual: f64,
    },

    #[error("step {step}: fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
