use thiserror::Error;

/// Errors raised by the simulator's pure operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the operation's domain (non-positive distance,
    /// empty share list, and so on).
    #[error("domain error: {0}")]
    Domain(String),
    /// A lookup by id that found nothing.
    #[error("lookup error: {0}")]
    Lookup(String),
    /// A request from an interface the controller does not know.
    #[error("interface {0} is not registered with the controller")]
    Unregistered(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
