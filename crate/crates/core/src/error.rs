use thiserror::Error;

/// Errors raised by the synthesis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("{what} = {value} is not a grid node")]
    NotANode { what: &'static str, value: f64 },

    #[error("{solver} did not converge after {iterations} iterations (last difference {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("fold continuity violated: |u1(0) - u2(0)| = {jump:.3e} exceeds {tol:.3e}")]
    Continuity { jump: f64, tol: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
