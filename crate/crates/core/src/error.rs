use thiserror::Error;

/// Errors raised by the tree, model, solver, measure and inference layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation (vertex not in
    /// the tree, generation past the depth, configuration/shape mismatch).
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters failed validation (non-finite emission entries, β ≤ 0, …).
    #[error("invalid parameters: {0}")]
    Validation(String),

    /// An exact enumeration would exceed the desk-scale size guard.
    #[error("capacity exceeded: {what} needs {needed} states, limit is {limit}")]
    Capacity {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    /// The operation was called outside the regime it is valid for.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
