//! Per-tick control allocation.
//!
//! The realizable input `l(P) = (E J ∂_ss θ + B P + l_g)/(ρ J)` is matched to
//! the PD law `l_*(k) = ∂_tt θ_* − k_θ e_θ − k_ω e_ω` in the trapezoidal L²
//! norm, jointly over the pressures and the per-node gain samples:
//!
//! ```text
//! min  Σ_i w_i (l_i(P) − l_*,i(k))²
//! s.t. 0 ≤ P_j ≤ P_max,j,   k_ω,i ≥ k̄,   (k_θ,i ≥ k̄_θ in the extended mode)
//! ```
//!
//! Every residual is affine in the stacked decision vector
//! `x = [P, k_ω, (k_θ)]`, so this is a box-constrained weighted least squares.
//! It is always feasible; an unreachable target only shows up as a positive
//! residual.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::actuation::{ActuatorBank, Contraction};
use crate::control::{tracking_errors, DesiredTrajectory, GainProfile};
use crate::error::{check_finite, check_len, Error, Result};
use crate::rod::{gravity_torque, second_difference_into, RodParams, RodState};

/// Which gains are decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    /// Only `k_ω` is free; `k_θ` is the fixed profile. The closed loop then
    /// keeps the PD structure with positive gains whenever the residual is
    /// zero.
    #[default]
    KOmegaFree,
    /// Both gain fields are free. More targets become realizable but the PD
    /// stability argument no longer applies.
    KOmegaAndKThetaFree,
}

/// The assembled least-squares problem for one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    /// Pressure-to-moment matrix (nodes × actuators), N·m/m per Pa. The
    /// clamped base row is zero.
    pub pressure_matrix: DMatrix<f64>,
    /// `ρ J_x`, converting moments to angular accelerations.
    pub inertia: f64,
    /// `(E J ∂_ss θ + l_g)/(ρ J)`; zero at the base.
    pub rhs_fixed: Vec<f64>,
    pub e_theta: Vec<f64>,
    pub e_omega: Vec<f64>,
    pub accel_star: Vec<f64>,
    /// Fixed `k_θ` field; in the extended mode only used as a starting point.
    pub k_theta: Vec<f64>,
    pub gain_mode: GainMode,
    pub p_max: Vec<f64>,
    pub k_bar: f64,
    pub k_theta_bar: f64,
    /// Trapezoidal quadrature weights, summing to the rod length.
    pub weights: Vec<f64>,
}

impl AllocationProblem {
    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_actuators(&self) -> usize {
        self.p_max.len()
    }

    pub fn n_vars(&self) -> usize {
        let gains = match self.gain_mode {
            GainMode::KOmegaFree => 1,
            GainMode::KOmegaAndKThetaFree => 2,
        };
        self.n_actuators() + gains * self.n_nodes()
    }

    /// Checks field lengths, finiteness and bound sanity.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        let m = self.n_actuators();
        if self.pressure_matrix.nrows() != n || self.pressure_matrix.ncols() != m {
            return Err(Error::DimensionMismatch {
                field: "pressure_matrix",
                expected: n * m,
                found: self.pressure_matrix.len(),
            });
        }
        for (name, f) in [
            ("rhs_fixed", &self.rhs_fixed),
            ("e_theta", &self.e_theta),
            ("e_omega", &self.e_omega),
            ("accel_star", &self.accel_star),
            ("k_theta", &self.k_theta),
        ] {
            check_len(name, f, n)?;
            check_finite(name, f)?;
        }
        check_finite("pressure_matrix", self.pressure_matrix.as_slice())?;
        check_finite("weights", &self.weights)?;
        if let Some(&w) = self.weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::invalid("weights", w, "must be positive"));
        }
        if let Some(&p) = self.p_max.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::invalid("p_max", p, "must be positive"));
        }
        if !(self.inertia.is_finite() && self.inertia > 0.0) {
            return Err(Error::invalid("inertia", self.inertia, "must be positive"));
        }
        if !(self.k_bar > 0.0) {
            return Err(Error::invalid("gains.k_bar", self.k_bar, "must be positive"));
        }
        if !(self.k_theta_bar > 0.0) {
            return Err(Error::invalid("gains.k_theta_bar", self.k_theta_bar, "must be positive"));
        }
        Ok(())
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        let mut lb = vec![0.0; self.n_actuators()];
        lb.extend(core::iter::repeat(self.k_bar).take(self.n_nodes()));
        if self.gain_mode == GainMode::KOmegaAndKThetaFree {
            lb.extend(core::iter::repeat(self.k_theta_bar).take(self.n_nodes()));
        }
        lb
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        let mut ub = self.p_max.clone();
        ub.extend(core::iter::repeat(f64::INFINITY).take(self.n_vars() - self.n_actuators()));
        ub
    }

    /// Acceleration per pascal, `B_ij/(ρ J)`.
    #[inline]
    fn accel_per_pa(&self, i: usize, j: usize) -> f64 {
        self.pressure_matrix[(i, j)] / self.inertia
    }

    /// Residual part that does not depend on the decision vector.
    fn offset(&self, i: usize) -> f64 {
        let base = self.rhs_fixed[i] - self.accel_star[i];
        match self.gain_mode {
            GainMode::KOmegaFree => base + self.k_theta[i] * self.e_theta[i],
            GainMode::KOmegaAndKThetaFree => base,
        }
    }

    /// `r = l(P) − l_*(k)` at the stacked vector `x`.
    pub fn residual_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.n_actuators();
        let n = self.n_nodes();
        for (i, o) in out.iter_mut().enumerate() {
            let mut r = self.offset(i) + x[m + i] * self.e_omega[i];
            if self.gain_mode == GainMode::KOmegaAndKThetaFree {
                r += x[m + n + i] * self.e_theta[i];
            }
            for j in 0..m {
                r += self.accel_per_pa(i, j) * x[j];
            }
            *o = r;
        }
    }

    /// Linear part of the residual applied to a direction `d`.
    fn apply_linear(&self, d: &[f64], out: &mut [f64]) {
        let m = self.n_actuators();
        let n = self.n_nodes();
        for (i, o) in out.iter_mut().enumerate() {
            let mut r = d[m + i] * self.e_omega[i];
            if self.gain_mode == GainMode::KOmegaAndKThetaFree {
                r += d[m + n + i] * self.e_theta[i];
            }
            for j in 0..m {
                r += self.accel_per_pa(i, j) * d[j];
            }
            *o = r;
        }
    }

    fn weighted_sq(&self, r: &[f64]) -> f64 {
        self.weights.iter().zip(r).map(|(w, r)| w * r * r).sum()
    }

    /// Gradient `2 Jᵀ W r` for the residual `r`.
    fn gradient_from_residual(&self, r: &[f64], g: &mut [f64]) {
        let m = self.n_actuators();
        let n = self.n_nodes();
        for j in 0..m {
            g[j] = 2.0 * (0..n).map(|i| self.weights[i] * r[i] * self.accel_per_pa(i, j)).sum::<f64>();
        }
        for i in 0..n {
            g[m + i] = 2.0 * self.weights[i] * r[i] * self.e_omega[i];
            if self.gain_mode == GainMode::KOmegaAndKThetaFree {
                g[m + n + i] = 2.0 * self.weights[i] * r[i] * self.e_theta[i];
            }
        }
    }

    /// `‖l − l_*‖²` at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n_nodes()];
        self.residual_into(x, &mut r);
        self.weighted_sq(&r)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_nodes()];
        self.residual_into(x, &mut r);
        let mut g = vec![0.0; self.n_vars()];
        self.gradient_from_residual(&r, &mut g);
        g
    }

    /// Realizable input `l(P)` in angular-acceleration units.
    pub fn realized_input(&self, pressures: &[f64]) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| {
                self.rhs_fixed[i]
                    + (0..self.n_actuators())
                        .map(|j| self.accel_per_pa(i, j) * pressures[j])
                        .sum::<f64>()
            })
            .collect()
    }

    /// PD law `l_*` for the given gain fields.
    pub fn target_input(&self, k_omega: &[f64], k_theta: &[f64]) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| self.accel_star[i] - k_theta[i] * self.e_theta[i] - k_omega[i] * self.e_omega[i])
            .collect()
    }

    /// Residual threshold below which the PD law counts as realized,
    /// `1e−6·(1 + ‖l_*‖²)`.
    pub fn realization_tolerance(&self, solution: &AllocationSolution) -> f64 {
        let kt = solution.k_theta.as_deref().unwrap_or(&self.k_theta);
        let target = self.target_input(&solution.k_omega, kt);
        1e-6 * (1.0 + self.weighted_sq(&target))
    }

    /// Stacks a solution into the decision-vector layout.
    pub fn stack(&self, solution: &AllocationSolution) -> Vec<f64> {
        let mut x = solution.pressures.clone();
        x.extend_from_slice(&solution.k_omega);
        if self.gain_mode == GainMode::KOmegaAndKThetaFree {
            x.extend_from_slice(solution.k_theta.as_deref().unwrap_or(&self.k_theta));
        }
        x
    }

    /// Column scales `sqrt(Σ w_i a_iv²)`; zero marks a variable that cannot
    /// influence the objective.
    fn column_scales(&self) -> Vec<f64> {
        let m = self.n_actuators();
        let n = self.n_nodes();
        let mut s = vec![0.0; self.n_vars()];
        for (j, sj) in s.iter_mut().enumerate().take(m) {
            *sj = (0..n)
                .map(|i| {
                    let a = self.accel_per_pa(i, j);
                    self.weights[i] * a * a
                })
                .sum::<f64>()
                .sqrt();
        }
        for i in 0..n {
            s[m + i] = self.weights[i].sqrt() * self.e_omega[i].abs();
            if self.gain_mode == GainMode::KOmegaAndKThetaFree {
                s[m + n + i] = self.weights[i].sqrt() * self.e_theta[i].abs();
            }
        }
        s
    }
}

/// Assembles the allocation problem from the (estimated) state.
///
/// `eps` are the contraction estimates used to linearize the actuator model;
/// they are mandatory.
#[allow(clippy::too_many_arguments)]
pub fn build_problem(
    state: &RodState,
    params: &RodParams,
    bank: &ActuatorBank,
    eps: Option<&Contraction>,
    desired: &DesiredTrajectory,
    gains: &GainProfile,
    t: f64,
    mode: GainMode,
) -> Result<AllocationProblem> {
    let eps = eps.ok_or(Error::MissingContraction)?;
    state.validate(params)?;
    gains.validate()?;
    let n = params.grid_size;
    check_len("desired", desired.final_shape(), n)?;
    check_len("gains.k_theta", &gains.k_theta, n)?;

    let mut pressure_matrix = bank.moment_to_pressure_matrix(eps, n)?;
    pressure_matrix.row_mut(0).fill(0.0);

    let lg = gravity_torque(state, params)?;
    let mut d2 = vec![0.0; n];
    second_difference_into(&state.theta, params.spacing(), &mut d2);
    let ei = params.bending_stiffness();
    let inertia = params.rotational_inertia();
    let mut rhs_fixed: Vec<f64> = (0..n).map(|i| (ei * d2[i] + lg[i]) / inertia).collect();
    rhs_fixed[0] = 0.0;

    let sample = desired.sample(t);
    let errors = tracking_errors(state, &sample)?;

    let problem = AllocationProblem {
        pressure_matrix,
        inertia,
        rhs_fixed,
        e_theta: errors.theta,
        e_omega: errors.omega,
        accel_star: sample.accel,
        k_theta: gains.k_theta.clone(),
        gain_mode: mode,
        p_max: bank.actuators().iter().map(|a| a.p_max()).collect(),
        k_bar: gains.k_bar,
        k_theta_bar: gains.k_theta_bar,
        weights: params.quadrature_weights(),
    };
    problem.validate()?;
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Iteration budget exhausted; the best iterate is returned.
    MaxIter,
    /// The problem failed validation; the returned point is the projected
    /// starting point.
    InfeasibleInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    /// Pa
    pub pressures: Vec<f64>,
    pub k_omega: Vec<f64>,
    /// Present only when `k_θ` is a decision variable.
    pub k_theta: Option<Vec<f64>>,
    /// `‖l − l_*‖²` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative stationarity tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Projected-gradient solver with Barzilai–Borwein steps, exact line search
/// along the projected direction, and an active-set polish. Owns its scratch
/// buffers; one instance per control loop.
#[derive(Debug, Clone, Default)]
pub struct AllocationSolver {
    pub settings: SolverSettings,
    history: Vec<f64>,
    r: Vec<f64>,
    q: Vec<f64>,
    g: Vec<f64>,
    g_prev: Vec<f64>,
    d: Vec<f64>,
}

impl AllocationSolver {
    pub fn new(settings: SolverSettings) -> Self {
        Self {
            settings,
            ..Self::default()
        }
    }

    /// Objective value after every accepted update of the last solve.
    pub fn objective_history(&self) -> &[f64] {
        &self.history
    }

    pub fn solve(&mut self, problem: &AllocationProblem, warm_start: Option<&AllocationSolution>) -> AllocationSolution {
        self.history.clear();
        let lb = problem.lower_bounds();
        let ub = problem.upper_bounds();
        let nv = problem.n_vars();
        let m = problem.n_actuators();
        let n = problem.n_nodes();

        let mut x = match warm_start {
            Some(ws) if ws.pressures.len() == m && ws.k_omega.len() == n => problem.stack(ws),
            _ => {
                let mut x = lb.clone();
                if problem.gain_mode == GainMode::KOmegaAndKThetaFree && problem.k_theta.len() == n {
                    x[m + n..].copy_from_slice(&problem.k_theta);
                }
                x
            }
        };
        if x.len() != nv {
            x = lb.clone();
        }
        project(&mut x, &lb, &ub);

        if problem.validate().is_err() {
            return self.package(problem, &x, 0, SolveStatus::InfeasibleInput);
        }

        let scale = problem.column_scales();
        // Variables with no influence on the objective sit at their lower
        // bound: the smallest admissible gain, zero pressure.
        let inert: Vec<bool> = scale.iter().map(|s| *s == 0.0).collect();
        for v in 0..nv {
            if inert[v] {
                x[v] = lb[v];
            }
        }
        let metric: Vec<f64> = scale.iter().map(|s| if *s > 0.0 { s * s } else { 1.0 }).collect();

        self.r.resize(n, 0.0);
        self.q.resize(n, 0.0);
        self.g.resize(nv, 0.0);
        self.g_prev.resize(nv, 0.0);
        self.d.resize(nv, 0.0);

        // Reference gradient at the origin for the relative stopping test.
        let zero = vec![0.0; nv];
        problem.residual_into(&zero, &mut self.r);
        problem.gradient_from_residual(&self.r, &mut self.g);
        let g0 = scaled_norm(&self.g, &metric, &inert, |g, s| g * g / s);
        let threshold = self.settings.tol * (1.0 + g0);

        problem.residual_into(&x, &mut self.r);
        let mut f = problem.weighted_sq(&self.r);
        problem.gradient_from_residual(&self.r, &mut self.g);
        self.history.push(f);

        let mut alpha = 0.5;
        let mut status = SolveStatus::MaxIter;
        let mut iterations = 0;
        loop {
            let pg = self.projected_gradient_norm(&x, &lb, &ub, &metric, &inert);
            if pg <= threshold {
                status = SolveStatus::Optimal;
                break;
            }
            if iterations >= self.settings.max_iter {
                break;
            }
            iterations += 1;

            for v in 0..nv {
                self.d[v] = if inert[v] {
                    0.0
                } else {
                    (x[v] - alpha * self.g[v] / metric[v]).clamp(lb[v], ub[v]) - x[v]
                };
            }
            let slope: f64 = self.d.iter().zip(&self.g).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) {
                // No descent along the projected direction at this step size.
                if alpha > 1e-12 {
                    alpha *= 0.1;
                    continue;
                }
                break;
            }
            problem.apply_linear(&self.d, &mut self.q);
            let curvature = 2.0 * problem.weighted_sq(&self.q);
            let t = if curvature > 0.0 { (-slope / curvature).min(1.0) } else { 1.0 };

            for v in 0..nv {
                if self.d[v] != 0.0 {
                    let moved = x[v] + t * self.d[v];
                    // land exactly on a bound when the full step reaches it
                    x[v] = if t == 1.0 { (x[v] + self.d[v]).clamp(lb[v], ub[v]) } else { moved.clamp(lb[v], ub[v]) };
                }
            }
            self.g_prev.copy_from_slice(&self.g);
            problem.residual_into(&x, &mut self.r);
            let f_new = problem.weighted_sq(&self.r);
            problem.gradient_from_residual(&self.r, &mut self.g);
            f = f_new;
            self.history.push(f);

            // Barzilai–Borwein step in the scaled metric.
            let mut ss = 0.0;
            let mut sy = 0.0;
            for v in 0..nv {
                let s = t * self.d[v];
                ss += metric[v] * s * s;
                sy += s * (self.g[v] - self.g_prev[v]);
            }
            alpha = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1.0 };
        }
        let _ = f;

        let rounds = 2 * nv + 10;
        for _ in 0..rounds {
            problem.residual_into(&x, &mut self.r);
            problem.gradient_from_residual(&self.r, &mut self.g);
            let moved = self.refine_step(problem, &mut x, &lb, &ub, &inert);
            if moved {
                self.history.push(problem.objective(&x));
                problem.residual_into(&x, &mut self.r);
                problem.gradient_from_residual(&self.r, &mut self.g);
            }
            if self.projected_gradient_norm(&x, &lb, &ub, &metric, &inert) <= threshold {
                status = SolveStatus::Optimal;
                break;
            }
            if !moved {
                break;
            }
        }

        self.release_cocontraction(problem, &mut x);
        self.package(problem, &x, iterations, status)
    }

    fn projected_gradient_norm(&self, x: &[f64], lb: &[f64], ub: &[f64], metric: &[f64], inert: &[bool]) -> f64 {
        let mut acc = 0.0;
        for v in 0..x.len() {
            if inert[v] {
                continue;
            }
            let step = x[v] - (x[v] - self.g[v] / metric[v]).clamp(lb[v], ub[v]);
            acc += metric[v] * step * step;
        }
        acc.sqrt()
    }

    /// One primal active-set step. Bound variables whose gradient points
    /// into the box are released, the objective is minimized exactly over the
    /// released subspace, and `x` moves toward that minimizer until the first
    /// bound blocks. Returns false when no progress is possible.
    fn refine_step(&self, problem: &AllocationProblem, x: &mut [f64], lb: &[f64], ub: &[f64], inert: &[bool]) -> bool {
        let mut free: Vec<bool> = (0..x.len())
            .map(|v| {
                !inert[v]
                    && ((x[v] > lb[v] && x[v] < ub[v])
                        || (x[v] == lb[v] && self.g[v] < 0.0)
                        || (x[v] == ub[v] && self.g[v] > 0.0))
            })
            .collect();
        let f_before = problem.objective(x);
        // A variable sitting on a bound that the subspace minimizer pushes
        // straight out of the box blocks a zero-length step; hold it and
        // re-solve on the smaller subspace.
        let (y, t, blocking) = loop {
            let Some(y) = subspace_minimizer(problem, x, &free) else {
                return false;
            };
            let mut t = 1.0_f64;
            let mut blocking = None;
            for v in 0..x.len() {
                let d = y[v] - x[v];
                let limit = if d < 0.0 {
                    (lb[v] - x[v]) / d
                } else if d > 0.0 {
                    (ub[v] - x[v]) / d
                } else {
                    continue;
                };
                if limit < t {
                    t = limit.max(0.0);
                    blocking = Some(v);
                }
            }
            match blocking {
                Some(v) if t == 0.0 && free[v] => free[v] = false,
                _ => break (y, t, blocking),
            }
        };
        let mut next = x.to_vec();
        for v in 0..x.len() {
            next[v] = (x[v] + t * (y[v] - x[v])).clamp(lb[v], ub[v]);
        }
        if let Some(v) = blocking {
            next[v] = if y[v] < x[v] { lb[v] } else { ub[v] };
        }
        if !(problem.objective(&next) <= f_before) || next == x {
            return false;
        }
        x.copy_from_slice(&next);
        true
    }

    /// When the pressure columns are linearly dependent with a same-sign null
    /// vector (antagonistic actuators seeing the same contraction), the
    /// optimum is a whole segment. Pick its end with least co-contraction.
    fn release_cocontraction(&self, problem: &AllocationProblem, x: &mut [f64]) {
        let m = problem.n_actuators();
        if m < 2 {
            return;
        }
        let n = problem.n_nodes();
        let gram = DMatrix::from_fn(m, m, |a, b| {
            (0..n)
                .map(|i| problem.weights[i] * problem.accel_per_pa(i, a) * problem.accel_per_pa(i, b))
                .sum::<f64>()
        });
        let eig = SymmetricEigen::new(gram);
        let largest = eig.eigenvalues.amax();
        if !(largest > 0.0) {
            return;
        }
        let before = problem.objective(x);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > 1e-12 * largest {
                continue;
            }
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            if v.iter().sum::<f64>() < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            if v.iter().any(|c| *c < -1e-12) {
                continue;
            }
            let step = (0..m)
                .filter(|&j| v[j] > 1e-12)
                .map(|j| x[j] / v[j])
                .fold(f64::INFINITY, f64::min);
            if !(step.is_finite() && step > 0.0) {
                continue;
            }
            let saved: Vec<f64> = x[..m].to_vec();
            for j in 0..m {
                x[j] = (x[j] - step * v[j]).max(0.0);
                if v[j] > 1e-12 && (x[j] / v[j]) < 1e-12 * step {
                    x[j] = 0.0;
                }
            }
            if problem.objective(x) > before * (1.0 + 1e-10) + 1e-300 {
                x[..m].copy_from_slice(&saved);
            }
        }
    }

    fn package(&self, problem: &AllocationProblem, x: &[f64], iterations: usize, status: SolveStatus) -> AllocationSolution {
        let m = problem.n_actuators();
        let n = problem.n_nodes();
        AllocationSolution {
            pressures: x[..m].to_vec(),
            k_omega: x[m..m + n].to_vec(),
            k_theta: (problem.gain_mode == GainMode::KOmegaAndKThetaFree).then(|| x[m + n..].to_vec()),
            residual: problem.objective(x).max(0.0),
            iterations,
            status,
        }
    }
}

/// Minimizer of the objective over the variables flagged `free`, the rest
/// held at `x`. Each free gain zeroes its own row; the free pressures solve the
/// normal equations of the remaining rows (minimum-norm when singular).
fn subspace_minimizer(problem: &AllocationProblem, x: &[f64], free: &[bool]) -> Option<Vec<f64>> {
    let m = problem.n_actuators();
    let n = problem.n_nodes();
    let extended = problem.gain_mode == GainMode::KOmegaAndKThetaFree;
    let absorbs = |i: usize| free[m + i] || (extended && free[m + n + i]);
    let free_p: Vec<usize> = (0..m).filter(|&j| free[j]).collect();
    let mut y = x.to_vec();

    if !free_p.is_empty() {
        let k = free_p.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for j in &free_p {
            y[*j] = 0.0;
        }
        let mut base = vec![0.0; n];
        problem.residual_into(&y, &mut base);
        for i in (0..n).filter(|&i| !absorbs(i)) {
            let w = problem.weights[i];
            for (u, &ju) in free_p.iter().enumerate() {
                let cu = problem.accel_per_pa(i, ju);
                b[u] -= w * cu * base[i];
                for (v, &jv) in free_p.iter().enumerate() {
                    a[(u, v)] += w * cu * problem.accel_per_pa(i, jv);
                }
            }
        }
        let svd = a.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let sol = svd.solve(&b, eps).ok()?;
        for (u, &j) in free_p.iter().enumerate() {
            y[j] = sol[u];
        }
    }

    let mut r = vec![0.0; n];
    problem.residual_into(&y, &mut r);
    for i in (0..n).filter(|&i| absorbs(i)) {
        if free[m + i] {
            y[m + i] -= r[i] / problem.e_omega[i];
        } else {
            y[m + n + i] -= r[i] / problem.e_theta[i];
        }
    }
    y.iter().all(|v| v.is_finite()).then_some(y)
}

fn project(x: &mut [f64], lb: &[f64], ub: &[f64]) {
    for (v, (l, u)) in x.iter_mut().zip(lb.iter().zip(ub)) {
        *v = if v.is_nan() { *l } else { v.clamp(*l, *u) };
    }
}

fn scaled_norm(g: &[f64], metric: &[f64], inert: &[bool], f: impl Fn(f64, f64) -> f64) -> f64 {
    g.iter()
        .zip(metric)
        .zip(inert)
        .filter(|(_, i)| !**i)
        .map(|((g, s), _)| f(*g, *s))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundFlag {
    Free,
    LowerActive,
    UpperActive,
}

/// First-order optimality diagnostics for a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub flags: Vec<BoundFlag>,
    /// Raw objective gradient.
    pub gradient: Vec<f64>,
    /// Scaled projected-gradient components `s_v (x − Π(x − g/s_v²))`.
    pub projected_gradient: Vec<f64>,
    /// Stopping threshold the components are compared against.
    pub tolerance: f64,
    /// `w_i r_i²`, summing to the objective.
    pub residual_by_node: Vec<f64>,
    pub objective: f64,
}

impl KktReport {
    pub fn max_projected_gradient(&self) -> f64 {
        self.projected_gradient.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

pub fn kkt_report(problem: &AllocationProblem, solution: &AllocationSolution, tol: f64) -> KktReport {
    let x = problem.stack(solution);
    let lb = problem.lower_bounds();
    let ub = problem.upper_bounds();
    let n = problem.n_nodes();
    let mut r = vec![0.0; n];
    problem.residual_into(&x, &mut r);
    let mut g = vec![0.0; problem.n_vars()];
    problem.gradient_from_residual(&r, &mut g);
    let scale = problem.column_scales();

    let zero = vec![0.0; problem.n_vars()];
    let g0 = problem.gradient(&zero);
    let inert: Vec<bool> = scale.iter().map(|s| *s == 0.0).collect();
    let metric: Vec<f64> = scale.iter().map(|s| if *s > 0.0 { s * s } else { 1.0 }).collect();
    let g0n = scaled_norm(&g0, &metric, &inert, |g, s| g * g / s);

    let flags = x
        .iter()
        .zip(lb.iter().zip(&ub))
        .map(|(v, (l, u))| {
            if v == l {
                BoundFlag::LowerActive
            } else if v == u {
                BoundFlag::UpperActive
            } else {
                BoundFlag::Free
            }
        })
        .collect();
    let projected_gradient = (0..x.len())
        .map(|v| {
            if inert[v] {
                0.0
            } else {
                let s = scale[v];
                s * (x[v] - (x[v] - g[v] / (s * s)).clamp(lb[v], ub[v]))
            }
        })
        .collect();
    let residual_by_node: Vec<f64> = (0..n).map(|i| problem.weights[i] * r[i] * r[i]).collect();
    KktReport {
        flags,
        gradient: g,
        projected_gradient,
        tolerance: tol * (1.0 + g0n),
        objective: residual_by_node.iter().sum(),
        residual_by_node,
    }
}
