use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("stopping time not reached: {0}")]
    NotReached(String),
    #[error("simulation cap of {cap} steps reached before {what}")]
    CapReached { cap: u64, what: String },
    #[error(
        "integrand support [{lo}, {hi}) is not covered by the level window [{win_lo}, {win_hi})"
    )]
    Coverage {
        lo: f64,
        hi: f64,
        win_lo: f64,
        win_hi: f64,
    },
    #[error("glued paths do not share provenance: {0}")]
    Provenance(String),
    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
