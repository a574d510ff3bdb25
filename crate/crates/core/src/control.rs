//! Tracking errors and the distributed PD law.
//!
//! The law is expressed in angular-acceleration units:
//! `l_* = ∂_tt θ_* − k_θ sin(θ − θ_*) − k_ω (ω − ω_*)`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_finite, check_len, Error, Result};
use crate::rod::{RodParams, RodState};

/// Desired angle field with its first two time derivatives at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredSample {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub accel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Static(Vec<f64>),
    Homotopy {
        from: Vec<f64>,
        to: Vec<f64>,
        start: f64,
        duration: f64,
    },
}

/// A desired configuration trajectory `θ_*(s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredTrajectory {
    kind: Kind,
}

impl DesiredTrajectory {
    /// Fixed target shape.
    pub fn snapshot(theta: Vec<f64>) -> Self {
        Self {
            kind: Kind::Static(theta),
        }
    }

    /// Constant-curvature arc `θ_*(s) = κ s + θ₀`.
    pub fn arc(params: &RodParams, curvature: f64) -> Self {
        let theta = params
            .arc_lengths()
            .iter()
            .map(|&s| curvature * s + params.base_angle)
            .collect();
        Self::snapshot(theta)
    }

    /// Blend from `from` to `to` over `[start, start + duration]` with a
    /// quintic smoothstep, so velocity and acceleration vanish at both ends.
    pub fn homotopy(from: Vec<f64>, to: Vec<f64>, start: f64, duration: f64) -> Result<Self> {
        check_len("target.to", &to, from.len())?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::invalid("target.duration", duration, "must be positive"));
        }
        Ok(Self {
            kind: Kind::Homotopy {
                from,
                to,
                start,
                duration,
            },
        })
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            Kind::Static(t) => t.len(),
            Kind::Homotopy { from, .. } => from.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_static(&self) -> bool {
        matches!(self.kind, Kind::Static(_))
    }

    /// Shape the trajectory settles on.
    pub fn final_shape(&self) -> &[f64] {
        match &self.kind {
            Kind::Static(t) => t,
            Kind::Homotopy { to, .. } => to,
        }
    }

    pub fn sample(&self, t: f64) -> DesiredSample {
        let n = self.len();
        let mut out = DesiredSample {
            theta: vec![0.0; n],
            omega: vec![0.0; n],
            accel: vec![0.0; n],
        };
        self.sample_into(t, &mut out);
        out
    }

    pub fn sample_into(&self, t: f64, out: &mut DesiredSample) {
        match &self.kind {
            Kind::Static(theta) => {
                out.theta.copy_from_slice(theta);
                out.omega.iter_mut().for_each(|v| *v = 0.0);
                out.accel.iter_mut().for_each(|v| *v = 0.0);
            }
            Kind::Homotopy {
                from,
                to,
                start,
                duration,
            } => {
                let u = ((t - start) / duration).clamp(0.0, 1.0);
                let (h, dh, ddh) = if u <= 0.0 || u >= 1.0 {
                    (u, 0.0, 0.0)
                } else {
                    let u2 = u * u;
                    let u3 = u2 * u;
                    (
                        u3 * (10.0 - 15.0 * u + 6.0 * u2),
                        30.0 * u2 * (1.0 - u) * (1.0 - u) / duration,
                        60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (duration * duration),
                    )
                };
                for i in 0..from.len() {
                    let delta = to[i] - from[i];
                    out.theta[i] = from[i] + h * delta;
                    out.omega[i] = dh * delta;
                    out.accel[i] = ddh * delta;
                }
            }
        }
    }
}

/// Feedback gain fields of the PD law.
#[derive(Debug, Clone, PartialEq)]
pub struct GainProfile {
    /// s⁻²
    pub k_theta: Vec<f64>,
    /// s⁻¹
    pub k_omega: Vec<f64>,
    /// Positivity floor for `k_omega`.
    pub k_bar: f64,
    /// Lower bound on `k_theta` when it is a decision variable.
    pub k_theta_bar: f64,
}

impl GainProfile {
    pub const DEFAULT_K_THETA: f64 = 1.0e5;
    pub const DEFAULT_K_OMEGA: f64 = 1.0e3;
    pub const DEFAULT_K_BAR: f64 = 1.0;

    pub fn uniform(n: usize, k_theta: f64, k_omega: f64) -> Self {
        Self {
            k_theta: vec![k_theta; n],
            k_omega: vec![k_omega; n],
            k_bar: Self::DEFAULT_K_BAR,
            k_theta_bar: k_theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_bar.is_finite() && self.k_bar > 0.0) {
            return Err(Error::invalid("gains.k_bar", self.k_bar, "must be positive"));
        }
        if !(self.k_theta_bar.is_finite() && self.k_theta_bar > 0.0) {
            return Err(Error::invalid("gains.k_theta_bar", self.k_theta_bar, "must be positive"));
        }
        if let Some(&k) = self.k_theta.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::invalid("gains.k_theta", k, "must be positive at every node"));
        }
        if let Some(&k) = self.k_omega.iter().find(|k| !(k.is_finite() && **k >= self.k_bar)) {
            return Err(Error::invalid("gains.k_omega", k, "must be at least k_bar at every node"));
        }
        Ok(())
    }
}

/// `e_θ = sin(θ − θ_*)` and `e_ω = ω − ω_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingErrors {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl TrackingErrors {
    /// `∫ (e_θ² + e_ω²) ds`
    pub fn squared_norm(&self, ds: f64) -> f64 {
        let v: Vec<f64> = self
            .theta
            .iter()
            .zip(&self.omega)
            .map(|(a, b)| a * a + b * b)
            .collect();
        crate::rod::trapezoid(&v, ds)
    }
}

pub fn tracking_errors(state: &RodState, desired: &DesiredSample) -> Result<TrackingErrors> {
    let n = state.theta.len();
    check_len("state.omega", &state.omega, n)?;
    check_len("desired.theta", &desired.theta, n)?;
    check_len("desired.omega", &desired.omega, n)?;
    let mut e = TrackingErrors {
        theta: vec![0.0; n],
        omega: vec![0.0; n],
    };
    tracking_errors_into(&state.theta, &state.omega, desired, &mut e);
    Ok(e)
}

pub(crate) fn tracking_errors_into(
    theta: &[f64],
    omega: &[f64],
    desired: &DesiredSample,
    out: &mut TrackingErrors,
) {
    for i in 0..theta.len() {
        out.theta[i] = (theta[i] - desired.theta[i]).sin();
        out.omega[i] = omega[i] - desired.omega[i];
    }
}

fn check_law_inputs(errors: &TrackingErrors, desired: &DesiredSample, gains: &GainProfile) -> Result<()> {
    gains.validate()?;
    let n = errors.theta.len();
    check_len("errors.omega", &errors.omega, n)?;
    check_len("desired.accel", &desired.accel, n)?;
    check_len("gains.k_theta", &gains.k_theta, n)?;
    check_len("gains.k_omega", &gains.k_omega, n)?;
    check_finite("errors.theta", &errors.theta)?;
    check_finite("errors.omega", &errors.omega)?;
    Ok(())
}

/// Full PD law `∂_tt θ_* − k_θ e_θ − k_ω e_ω`.
pub fn desired_input(errors: &TrackingErrors, desired: &DesiredSample, gains: &GainProfile) -> Result<Vec<f64>> {
    check_law_inputs(errors, desired, gains)?;
    Ok((0..errors.theta.len())
        .map(|i| {
            desired.accel[i] - gains.k_theta[i] * errors.theta[i] - gains.k_omega[i] * errors.omega[i]
        })
        .collect())
}

/// PD law without the velocity feedback term, for loops whose latency makes
/// velocity information stale.
pub fn proportional_only_input(
    errors: &TrackingErrors,
    desired: &DesiredSample,
    gains: &GainProfile,
) -> Result<Vec<f64>> {
    check_law_inputs(errors, desired, gains)?;
    Ok((0..errors.theta.len())
        .map(|i| desired.accel[i] - gains.k_theta[i] * errors.theta[i])
        .collect())
}
