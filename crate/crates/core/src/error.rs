use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural invariant of an input object is violated.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// An exhaustive computation would exceed its enumeration budget.
    #[error("budget exceeded for {what}: {requested} > limit {limit}")]
    Budget {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A result that must hold by construction did not; signals a bug.
    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn budget(what: &'static str, requested: u128, limit: u128) -> Self {
        Error::Budget {
            what,
            requested,
            limit,
        }
    }
}
