use thiserror::Error;

/// Errors raised by the simulator and its analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("Chernoff bound unavailable: {0}")]
    BoundUnavailable(String),
    #[error("divergence detected: {0}")]
    DivergenceDetected(String),
    #[error("stability violation at agent {agent} (slot {slot:?}): {detail}")]
    StabilityViolation {
        slot: Option<u64>,
        agent: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
