use thiserror::Error;

/// Errors raised by the polar broken-FEEC library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {value} outside of the domain [{lower}, {upper}]")]
    Domain { value: f64, lower: f64, upper: f64 },

    #[error("singular matrix (pivot {pivot:e} at row {row}); check node admissibility")]
    Singular { row: usize, pivot: f64 },

    #[error("pushforward of a level-{level} field is undefined at the pole (s = 0)")]
    PoleSingularity { level: usize },

    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("bessel root search failed for n = {n}, m = {m}")]
    BesselRoot { n: usize, m: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
