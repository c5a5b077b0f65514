use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("not an engine: parameters do not absorb heat from the hot bath and reject it to the cold bath")]
    NotAnEngine,

    #[error("total cycle duration must be positive")]
    ZeroDuration,

    #[error("time step {dt:e} s exceeds the limit {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("position z = {z:e} m lies outside the tapered validity region")]
    OutsideValidity { z: f64 },

    #[error("trap geometry has no calibrated rf amplitude")]
    Uncalibrated,

    #[error("rf drive is unstable: secular motion is unbounded")]
    UnstableDrive,

    #[error("no root in the validity region: {0}")]
    NoRoot(String),

    #[error("no engine operating point in the search interval")]
    NoEnginePoint,

    #[error("scattering probability per step {0:.3} exceeds the thinning bound 0.1")]
    ThinningViolated(f64),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("no steady state reached within {0} cycles")]
    NoSteadyState(usize),

    #[error("need at least {needed} steady-state cycles, found {found}")]
    InsufficientCycles { needed: usize, found: usize },

    #[error("frequency mismatch: solution was computed for a different ramp")]
    FrequencyMismatch,

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Checks that `value` is finite and strictly positive.
pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

/// Like [`positive`] but admits `+inf` (zero temperature).
pub(crate) fn positive_or_inf(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && !value.is_nan() {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be > 0, got {value}")))
    }
}
