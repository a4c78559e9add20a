use thiserror::Error;

/// Errors produced by the allocation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter set or configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A call's precondition was not met.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Exhaustive enumeration would visit more candidates than the guard allows.
    #[error("instance too large for exhaustive search: {candidates} candidate assignments exceed the limit of {limit}")]
    InstanceTooLarge { candidates: u128, limit: u128 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
