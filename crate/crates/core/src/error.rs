use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("degenerate channel: lambda + gamma = 0, stationary vector is not unique")]
    DegenerateChain,

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("packet of {size} bits does not fit in a timeout of {timeout} bit-times")]
    TimeoutTooShort { size: u64, timeout: u64 },

    #[error("no convergence: success probability for a {size}-bit packet is numerically zero")]
    NoConvergence { size: u64 },

    #[error("empty payload range")]
    EmptyRange,

    #[error("malformed CDF: {0}")]
    MalformedCdf(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid timing: {0}")]
    InvalidTiming(String),

    #[error("retry cap of {cap} attempts reached for a {size}-bit packet")]
    RetryCap { size: u64, cap: u64 },

    #[error("invalid simulation settings: {0}")]
    InvalidSimConfig(String),
}

impl Error {
    /// Errors that come out of the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::TimeoutTooShort { .. } | Error::RetryCap { .. }
        )
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}
