use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core crate.
///
/// Parameter names are dotted paths (`rod.density`, `sim.dt`) so that a
/// configuration front end can point at the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{field}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{field}[{index}] is not finite")]
    NonFinite { field: &'static str, index: usize },

    #[error("pressure must be non-negative, got {0} Pa")]
    NegativePressure(f64),

    #[error("actuator {actuator}: pressure {pressure} Pa outside [0, {p_max}] Pa")]
    PressureOutOfBounds {
        actuator: usize,
        pressure: f64,
        p_max: f64,
    },

    #[error("contraction estimates are required to build the allocation problem")]
    MissingContraction,

    #[error("circle fit needs at least 3 distinct points, got {0}")]
    TooFewPoints(usize),

    #[error("radius of curvature must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("state became non-finite at node {node} (t = {time} s)")]
    NumericalFailure { node: usize, time: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}

pub(crate) fn check_len(field: &'static str, data: &[f64], expected: usize) -> Result<()> {
    if data.len() != expected {
        return Err(Error::DimensionMismatch {
            field,
            expected,
            found: data.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(field: &'static str, data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { field, index }),
        None => Ok(()),
    }
}
