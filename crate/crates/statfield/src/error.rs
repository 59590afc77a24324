use thiserror::Error;

/// Errors raised anywhere in the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pole of {function} at {at}")]
    Pole { function: &'static str, at: f64 },

    #[error("{function}: argument {at} outside domain ({expected})")]
    Domain {
        function: &'static str,
        at: f64,
        expected: &'static str,
    },

    #[error("{function} failed to converge (estimated error {error:e})")]
    Convergence { function: &'static str, error: f64 },

    #[error("line {line}: cannot parse `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("sector {index}: |f| = {f:e} is below the singular floor")]
    Singular { index: usize, f: f64 },

    #[error("vanishing denominator at sector {index} ({value:e})")]
    Degenerate { index: usize, value: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("sector {index} outside the regime of this approximation: {condition}")]
    Regime { index: usize, condition: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
