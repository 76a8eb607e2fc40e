//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by simulator components.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its allowed domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Mismatched vector/matrix dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Alphabet unsupported by the requested construction.
    #[error("unsupported alphabet: {0}")]
    UnsupportedAlphabet(String),

    /// Numerical solver could not make progress.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// An enumeration budget (lookup table, candidate set) was exceeded.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Refusal to run an enumeration whose cost is prohibitive.
    #[error("complexity guard: {0}")]
    ComplexityGuard(String),

    /// A file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Convenience result alias.
pub type Result<T> = std::result::Result<T, Error>;
