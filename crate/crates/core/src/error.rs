use std::fmt;

use thiserror::Error;

/// Model parameter that failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Lambda,
    Mu,
    H,
    Velocity,
    Rate,
    Sigma,
    DriftA,
    DriftB,
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Param::Lambda => "lambda",
            Param::Mu => "mu",
            Param::H => "h",
            Param::Velocity => "velocity",
            Param::Rate => "rate",
            Param::Sigma => "sigma",
            Param::DriftA => "drift_a",
            Param::DriftB => "drift_b",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter {0} must be a finite positive number")]
    NonPositiveParameter(Param),

    #[error("{0}")]
    Domain(String),

    #[error("rates too close for the general formula (|lambda - mu| = {gap:e})")]
    DegenerateRates { gap: f64 },

    #[error("invalid index {0}: must be at least 1")]
    InvalidIndex(i64),

    #[error("switching probability {0} outside (0, 1]")]
    AlphaOutOfRange(f64),

    #[error("no absorption after {0} phases")]
    MaxPhasesExceeded(u64),

    #[error("more than {0} velocity reversals in a single phase")]
    ReversalCapExceeded(u64),

    #[error("dual representation identity violated: residual {residual:e}")]
    IdentityViolation { residual: f64 },

    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
