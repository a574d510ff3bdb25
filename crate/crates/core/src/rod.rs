//! Planar Kirchhoff rod: grid, semi-discretized dynamics, gravity loading and
//! centerline reconstruction.
//!
//! The state is the angle field `θ(s)` sampled on a uniform arc-length grid
//! together with its angular velocity. The base node is clamped at
//! [`RodParams::base_angle`]; the tip is moment free (`∂_s θ(L) = 0`), imposed
//! with a mirrored ghost node.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_finite, check_len, Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Material and geometric constants of the backbone plus grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RodParams {
    /// kg/m³
    pub density: f64,
    /// Pa
    pub youngs_modulus: f64,
    /// m²
    pub cross_section_area: f64,
    /// m⁴
    pub moment_of_area: f64,
    /// m
    pub length: f64,
    /// Number of arc-length samples, including both ends.
    pub grid_size: usize,
    /// Clamped angle at the base (rad).
    pub base_angle: f64,
    /// m/s²
    pub gravity: f64,
    /// Viscous damping rate (1/s), entering the dynamics as `−damping·ω`.
    /// Zero gives the conservative wave equation.
    pub damping: f64,
}

impl Default for RodParams {
    /// Dragon Skin silicone backbone of the desk-scale arm, 3 mm grid.
    fn default() -> Self {
        Self {
            density: 1070.0,
            youngs_modulus: 90.0e3,
            cross_section_area: 1.68e-4,
            moment_of_area: 0.12e-8,
            length: 0.3,
            grid_size: 101,
            base_angle: 0.0,
            gravity: STANDARD_GRAVITY,
            damping: 0.0,
        }
    }
}

impl RodParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rod.density", self.density),
            ("rod.youngs_modulus", self.youngs_modulus),
            ("rod.cross_section_area", self.cross_section_area),
            ("rod.moment_of_area", self.moment_of_area),
            ("rod.length", self.length),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, value, "must be finite and positive"));
            }
        }
        if self.grid_size < 3 {
            return Err(Error::invalid(
                "rod.grid_size",
                self.grid_size as f64,
                "must be at least 3",
            ));
        }
        if !self.base_angle.is_finite() {
            return Err(Error::invalid("rod.base_angle", self.base_angle, "must be finite"));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::invalid("rod.gravity", self.gravity, "must be finite and non-negative"));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::invalid("rod.damping", self.damping, "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Grid spacing `Δs = L/(N−1)`.
    pub fn spacing(&self) -> f64 {
        self.length / (self.grid_size - 1) as f64
    }

    /// Bending wave speed `sqrt(E/ρ)`.
    pub fn wave_speed(&self) -> f64 {
        (self.youngs_modulus / self.density).sqrt()
    }

    /// Largest stable explicit time step, `Δs/c`.
    pub fn cfl_limit(&self) -> f64 {
        self.spacing() / self.wave_speed()
    }

    /// Rotational inertia per unit length, `ρ J_x`.
    pub fn rotational_inertia(&self) -> f64 {
        self.density * self.moment_of_area
    }

    /// `E J_x`
    pub fn bending_stiffness(&self) -> f64 {
        self.youngs_modulus * self.moment_of_area
    }

    /// Weight per unit length, `ρ A_c g`.
    pub fn weight_density(&self) -> f64 {
        self.density * self.cross_section_area * self.gravity
    }

    pub fn arc_lengths(&self) -> Vec<f64> {
        let ds = self.spacing();
        (0..self.grid_size).map(|i| i as f64 * ds).collect()
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.grid_size, self.spacing())
    }
}

/// Trapezoidal weights on a uniform grid; they sum to `(n−1)·ds`.
pub fn trapezoid_weights(n: usize, ds: f64) -> Vec<f64> {
    let mut w = vec![ds; n];
    if n > 0 {
        w[0] = 0.5 * ds;
        w[n - 1] = 0.5 * ds;
    }
    w
}

pub(crate) fn trapezoid(values: &[f64], ds: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    ds * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Angle and angular velocity fields on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub time: f64,
}

impl RodState {
    /// Straight hanging rod at rest, clamped at the base angle.
    pub fn straight(params: &RodParams) -> Self {
        Self::at_rest(vec![params.base_angle; params.grid_size])
    }

    pub fn at_rest(theta: Vec<f64>) -> Self {
        let n = theta.len();
        Self {
            theta,
            omega: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn validate(&self, params: &RodParams) -> Result<()> {
        check_len("state.theta", &self.theta, params.grid_size)?;
        check_len("state.omega", &self.omega, params.grid_size)?;
        check_finite("state.theta", &self.theta)?;
        check_finite("state.omega", &self.omega)?;
        Ok(())
    }

    /// Reimposes the clamped base.
    pub fn apply_boundary(&mut self, params: &RodParams) {
        self.theta[0] = params.base_angle;
        self.omega[0] = 0.0;
    }
}

/// Second-order central difference of `theta` with the rod's boundary
/// handling: zero at the clamped base, mirrored ghost node at the free tip.
pub fn second_difference_into(theta: &[f64], ds: f64, out: &mut [f64]) {
    let n = theta.len();
    debug_assert_eq!(out.len(), n);
    let inv = 1.0 / (ds * ds);
    out[0] = 0.0;
    for i in 1..n - 1 {
        out[i] = (theta[i - 1] - 2.0 * theta[i] + theta[i + 1]) * inv;
    }
    out[n - 1] = 2.0 * (theta[n - 2] - theta[n - 1]) * inv;
}

/// Angular acceleration `(E J ∂_ss θ + l_c + l_g)/(ρ J)`, with the base entry
/// held at zero.
pub fn dynamics_rhs(
    state: &RodState,
    params: &RodParams,
    actuator_moment: &[f64],
    gravity_moment: &[f64],
) -> Result<Vec<f64>> {
    state.validate(params)?;
    check_len("l_c", actuator_moment, params.grid_size)?;
    check_len("l_g", gravity_moment, params.grid_size)?;
    let mut out = vec![0.0; params.grid_size];
    dynamics_rhs_into(&state.theta, params, actuator_moment, gravity_moment, &mut out);
    Ok(out)
}

/// Unchecked form of [`dynamics_rhs`] writing into `out`.
pub fn dynamics_rhs_into(
    theta: &[f64],
    params: &RodParams,
    actuator_moment: &[f64],
    gravity_moment: &[f64],
    out: &mut [f64],
) {
    second_difference_into(theta, params.spacing(), out);
    let ei = params.bending_stiffness();
    let inv_inertia = 1.0 / params.rotational_inertia();
    for i in 1..out.len() {
        out[i] = (ei * out[i] + actuator_moment[i] + gravity_moment[i]) * inv_inertia;
    }
    out[0] = 0.0;
}

/// Horizontal coordinate `y(s)` of the centerline, base at the origin.
pub fn horizontal_offsets_into(theta: &[f64], ds: f64, out: &mut [f64]) {
    let half = 0.5 * ds;
    out[0] = 0.0;
    let mut prev = -theta[0].sin();
    for i in 1..theta.len() {
        let cur = -theta[i].sin();
        out[i] = out[i - 1] + half * (prev + cur);
        prev = cur;
    }
}

/// Gravity moment density from the backbone weight plus the pin reaction.
///
/// The lever arm of the weight at `σ` about the reference point `s` is the
/// signed horizontal offset `y(σ) − y(s)`. The pin at the base carries the
/// full weight `ρ A_c L g` upward.
pub fn gravity_torque(state: &RodState, params: &RodParams) -> Result<Vec<f64>> {
    state.validate(params)?;
    let n = params.grid_size;
    let mut y = vec![0.0; n];
    horizontal_offsets_into(&state.theta, params.spacing(), &mut y);
    let mut out = vec![0.0; n];
    gravity_torque_from_offsets(&y, params, &mut out);
    Ok(out)
}

/// Backbone part only, `∫ ρ A_c g (y(σ) − y(s)) dσ`.
pub fn backbone_gravity_torque(state: &RodState, params: &RodParams) -> Result<Vec<f64>> {
    state.validate(params)?;
    let n = params.grid_size;
    let mut y = vec![0.0; n];
    horizontal_offsets_into(&state.theta, params.spacing(), &mut y);
    let q = trapezoid(&y, params.spacing());
    let weight = params.weight_density();
    Ok(y.iter().map(|&yi| weight * (q - params.length * yi)).collect())
}

/// Gravity moment density from precomputed horizontal positions. Only the
/// offsets relative to each reference node enter, so a rigid horizontal shift
/// of `y` leaves the result unchanged.
pub fn gravity_torque_from_offsets(y: &[f64], params: &RodParams, out: &mut [f64]) {
    let ds = params.spacing();
    let length = params.length;
    let weight = params.weight_density();
    let q = trapezoid(y, ds);
    let y0 = y[0];
    for (o, &yi) in out.iter_mut().zip(y) {
        let backbone = weight * (q - length * yi);
        let pin = -weight * length * (y0 - yi);
        *o = backbone + pin;
    }
}

/// Centerline positions with the local frame at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    /// (y, z) in meters, base at the origin.
    pub positions: Vec<[f64; 2]>,
    /// Unit tangents `(−sin θ, cos θ)`.
    pub tangents: Vec<[f64; 2]>,
    /// Unit normals `(cos θ, sin θ)`.
    pub normals: Vec<[f64; 2]>,
}

impl Centerline {
    pub fn arc_length(&self) -> f64 {
        self.positions
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }
}

/// Integrates the tangent field segment by segment along the mean angle of
/// the two end nodes, so every segment has length exactly `Δs`.
pub fn reconstruct_centerline(theta: &[f64], params: &RodParams) -> Result<Centerline> {
    check_len("theta", theta, params.grid_size)?;
    let ds = params.spacing();
    let tangent = |t: f64| {
        let (s, c) = t.sin_cos();
        [-s, c]
    };
    let tangents: Vec<[f64; 2]> = theta.iter().map(|&t| tangent(t)).collect();
    let normals = theta
        .iter()
        .map(|&t| {
            let (s, c) = t.sin_cos();
            [c, s]
        })
        .collect();
    let mut positions = Vec::with_capacity(theta.len());
    positions.push([0.0, 0.0]);
    for i in 1..theta.len() {
        let p: [f64; 2] = positions[i - 1];
        let j = tangent(0.5 * (theta[i - 1] + theta[i]));
        positions.push([p[0] + ds * j[0], p[1] + ds * j[1]]);
    }
    Ok(Centerline {
        positions,
        tangents,
        normals,
    })
}

/// Kinetic plus bending energy `½∫(ρJ ω² + EJ (∂_s θ)²) ds`.
pub fn elastic_energy(state: &RodState, params: &RodParams) -> Result<f64> {
    state.validate(params)?;
    Ok(elastic_energy_unchecked(&state.theta, &state.omega, params))
}

pub(crate) fn elastic_energy_unchecked(theta: &[f64], omega: &[f64], params: &RodParams) -> f64 {
    let n = theta.len();
    let ds = params.spacing();
    let rj = params.rotational_inertia();
    let ei = params.bending_stiffness();
    let density = |i: usize| {
        let strain = if i == 0 {
            (theta[1] - theta[0]) / ds
        } else if i == n - 1 {
            (theta[n - 1] - theta[n - 2]) / ds
        } else {
            (theta[i + 1] - theta[i - 1]) / (2.0 * ds)
        };
        0.5 * (rj * omega[i] * omega[i] + ei * strain * strain)
    };
    let mut total = 0.5 * (density(0) + density(n - 1));
    for i in 1..n - 1 {
        total += density(i);
    }
    total * ds
}
