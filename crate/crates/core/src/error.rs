use thiserror::Error;

/// Errors raised by the featmass library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two objects that must describe the same feature set disagree in length.
    #[error("alignment error: {what} has length {found}, expected {expected}")]
    Alignment {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A structural invariant of a domain type does not hold.
    #[error("invalid probability vector: {0}")]
    InvalidVector(String),
    /// The operation is not defined for this input family.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A numerical routine failed to converge or bracket its target.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
