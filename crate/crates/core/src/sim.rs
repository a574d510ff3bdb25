//! Closed-loop time integration.
//!
//! The rod is advanced with a leapfrog (Störmer–Verlet) scheme. External
//! loads are frozen over a step and evaluated at the predicted drift midpoint;
//! the elastic term is recomputed after the drift. Viscous damping enters
//! semi-implicitly so the scheme stays explicit and reduces to plain leapfrog
//! when the damping vanishes.
//!
//! The controller runs on a slower clock. Camera frames are captured at the
//! observer frame rate; each control tick uses the newest frame that is at
//! least `latency` old, solves the allocation problem, and holds the
//! resulting pressures until the next tick.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::actuation::{ActuatorBank, Contraction};
use crate::control::{DesiredSample, DesiredTrajectory, GainProfile};
use crate::error::{check_len, Error, Result};
use crate::observer::{marker_arc_lengths, Observation, Observer, ObserverConfig};
use crate::qp::{build_problem, AllocationProblem, AllocationSolution, AllocationSolver, GainMode, SolveStatus, SolverSettings};
use crate::rod::{
    dynamics_rhs_into, elastic_energy_unchecked, gravity_torque, gravity_torque_from_offsets, horizontal_offsets_into,
    RodParams, RodState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActuationMode {
    /// The PD law is applied directly as the angular acceleration, computed
    /// from the true state at every integration step.
    IdealLStar,
    /// Pressures from the allocation problem drive the actuator model.
    #[default]
    QpPressures,
    /// No controller; the bank's pressures are held for the whole run.
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// s; `None` picks half the CFL limit.
    pub dt: Option<f64>,
    /// s
    pub t_end: f64,
    /// s
    pub control_period: f64,
    /// rad, on the Euclidean norm of marker angle errors. A non-finite value
    /// disables stopping.
    pub stop_tol: f64,
    /// s the error must stay below `stop_tol` before the run stops.
    pub settle_time: f64,
    pub actuation_mode: ActuationMode,
    /// s
    pub record_period: f64,
    pub gain_mode: GainMode,
    /// Finite-difference velocity from successive observations. Off means the
    /// controller sees zero velocity error (proportional action only).
    pub estimate_velocity: bool,
    pub solver: SolverSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 20.0,
            control_period: 0.5,
            stop_tol: 0.15,
            settle_time: 1.0,
            actuation_mode: ActuationMode::QpPressures,
            record_period: 0.01,
            gain_mode: GainMode::KOmegaFree,
            estimate_velocity: false,
            solver: SolverSettings::default(),
        }
    }
}

impl SimConfig {
    /// Requested step before it is shrunk to divide `t_end` evenly.
    pub fn nominal_dt(&self, params: &RodParams) -> f64 {
        self.dt.unwrap_or(0.5 * params.cfl_limit())
    }

    /// Step actually used: `t_end / ceil(t_end / dt)`.
    pub fn effective_dt(&self, params: &RodParams) -> f64 {
        let dt = self.nominal_dt(params);
        self.t_end / (self.t_end / dt).ceil()
    }

    pub fn validate(&self, params: &RodParams) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("sim.t_end", self.t_end, "must be positive and finite"));
        }
        let dt = self.nominal_dt(params);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("sim.dt", dt, "must be positive"));
        }
        if dt > params.cfl_limit() {
            return Err(Error::invalid("sim.dt", dt, "violates the CFL bound dt <= ds/c"));
        }
        if !(self.control_period.is_finite() && self.control_period >= dt) {
            return Err(Error::invalid("sim.control_period", self.control_period, "must be finite and at least dt"));
        }
        if self.stop_tol.is_nan() || self.stop_tol <= 0.0 {
            return Err(Error::invalid("sim.stop_tol", self.stop_tol, "must be positive"));
        }
        if !(self.settle_time.is_finite() && self.settle_time >= 0.0) {
            return Err(Error::invalid("sim.settle_time", self.settle_time, "must be finite and non-negative"));
        }
        if !(self.record_period.is_finite() && self.record_period > 0.0) {
            return Err(Error::invalid("sim.record_period", self.record_period, "must be positive and finite"));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::invalid("sim.solver_tol", self.solver.tol, "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::invalid("sim.solver_max_iter", 0.0, "must be at least 1"));
        }
        Ok(())
    }
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rod: RodParams,
    /// Bank pressures are used only in open-loop mode; controlled runs start
    /// unpressurized.
    pub bank: ActuatorBank,
    pub target: DesiredTrajectory,
    pub gains: GainProfile,
    pub observer: ObserverConfig,
    pub sim: SimConfig,
    /// Defaults to the straight rod at rest.
    pub initial_state: Option<RodState>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.rod.validate()?;
        self.sim.validate(&self.rod)?;
        self.observer.validate()?;
        self.gains.validate()?;
        let n = self.rod.grid_size;
        check_len("gains.k_theta", &self.gains.k_theta, n)?;
        check_len("gains.k_omega", &self.gains.k_omega, n)?;
        check_len("target", self.target.final_shape(), n)?;
        crate::error::check_finite("target", self.target.final_shape())?;
        if self.bank.is_empty() {
            return Err(Error::invalid("actuators", 0.0, "at least one actuator is required"));
        }
        if let Some(s) = &self.initial_state {
            s.validate(&self.rod)?;
        }
        Ok(())
    }

    fn start_state(&self) -> RodState {
        let mut s = self.initial_state.clone().unwrap_or_else(|| RodState::straight(&self.rod));
        s.time = 0.0;
        s.apply_boundary(&self.rod);
        s
    }
}

/// Scratch for the leapfrog update.
#[derive(Debug, Clone, Default)]
struct Stepper {
    accel: Vec<f64>,
    omega_half: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Self {
            accel: vec![0.0; n],
            omega_half: vec![0.0; n],
        }
    }

    /// One damped leapfrog step with frozen loads. `damping` holds the
    /// per-node rate multiplying `−ω`.
    fn advance(
        &mut self,
        state: &mut RodState,
        params: &RodParams,
        dt: f64,
        damping: &[f64],
        mut accel: impl FnMut(&[f64], f64, &mut [f64]),
    ) -> Result<()> {
        let h = 0.5 * dt;
        let n = state.theta.len();
        accel(&state.theta, state.time, &mut self.accel);
        for i in 1..n {
            self.omega_half[i] = state.omega[i] + h * (self.accel[i] - damping[i] * state.omega[i]);
            state.theta[i] += dt * self.omega_half[i];
        }
        accel(&state.theta, state.time + dt, &mut self.accel);
        for i in 1..n {
            state.omega[i] = (self.omega_half[i] + h * self.accel[i]) / (1.0 + h * damping[i]);
        }
        state.time += dt;
        state.apply_boundary(params);
        if let Some(node) = state
            .theta
            .iter()
            .zip(&state.omega)
            .position(|(a, b)| !(a.is_finite() && b.is_finite()))
        {
            return Err(Error::NumericalFailure { node, time: state.time });
        }
        Ok(())
    }
}

/// Contraction the plant applies: one value per actuator from the mean
/// turning rate `(θ(L) − θ(0))/L` of the whole rod. For a circular arc this is
/// exactly `d/r`. The inner actuator contracts, the outer one is slack.
pub fn plant_contraction(theta: &[f64], params: &RodParams, bank: &ActuatorBank) -> Vec<f64> {
    let kappa = (theta[theta.len() - 1] - theta[0]) / params.length;
    bank.actuators()
        .iter()
        .map(|a| {
            let raw = a.moment_arm() * kappa;
            if raw > 0.0 {
                a.clamp_contraction(raw)
            } else {
                0.0
            }
        })
        .collect()
}

/// One leapfrog step of the rod under loads held fixed over the step.
pub fn step(state: &RodState, params: &RodParams, l_c: &[f64], l_g: &[f64], dt: f64) -> Result<RodState> {
    state.validate(params)?;
    check_len("l_c", l_c, params.grid_size)?;
    check_len("l_g", l_g, params.grid_size)?;
    if !(dt > 0.0 && dt <= params.cfl_limit()) {
        return Err(Error::invalid("sim.dt", dt, "violates the CFL bound dt <= ds/c"));
    }
    let mut next = state.clone();
    let damping = vec![params.damping; params.grid_size];
    Stepper::new(params.grid_size).advance(&mut next, params, dt, &damping, |theta, _, out| {
        dynamics_rhs_into(theta, params, l_c, l_g, out)
    })?;
    Ok(next)
}

/// Euclidean norm of `θ − θ_*` sampled at the marker positions.
pub fn marker_angle_error_norm(theta: &[f64], target: &[f64], params: &RodParams, n_markers: usize) -> f64 {
    let ds = params.spacing();
    let last = theta.len() - 1;
    marker_arc_lengths(n_markers, params.length)
        .iter()
        .map(|&s| {
            let u = s / ds;
            let i = (u.floor() as usize).min(last - 1);
            let f = (u - i as f64).clamp(0.0, 1.0);
            let e0 = theta[i] - target[i];
            let e1 = theta[i + 1] - target[i + 1];
            let e = e0 + f * (e1 - e0);
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimStatus {
    Converged,
    Timeout,
    NumericalFailure { node: usize, time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// s
    pub t: f64,
    /// rad, true marker angle errors
    pub err_norm: f64,
    /// Pa, pressures held at this instant
    pub pressures: Vec<f64>,
    /// Objective of the last allocation solve; zero in ideal mode.
    pub qp_residual: f64,
    pub qp_status: Option<SolveStatus>,
    /// J, kinetic plus bending
    pub energy: f64,
    /// `∫ (e_θ² + e_ω²) ds` on the true state.
    pub lyapunov: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub samples: Vec<Sample>,
    pub convergence_time: Option<f64>,
    pub final_state: RodState,
    pub status: SimStatus,
    pub control_ticks: usize,
}

impl SimResult {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.err_norm).collect()
    }

    pub fn metrics(&self, config: &SimConfig) -> Result<ConvergenceMetrics> {
        convergence_metrics(&self.times(), &self.error_norms(), config.stop_tol, config.settle_time)
    }
}

/// Output of one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub observation: Observation,
    pub problem: AllocationProblem,
    pub solution: AllocationSolution,
}

/// Observe, assemble and solve. Owns the observer's random stream and the
/// solver's warm start.
#[derive(Debug, Clone)]
pub struct Controller {
    observer: Observer,
    solver: AllocationSolver,
    warm: Option<AllocationSolution>,
    previous: Option<(f64, Vec<f64>)>,
}

impl Controller {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Ok(Self {
            observer: Observer::new(scenario.observer.clone())?,
            solver: AllocationSolver::new(scenario.sim.solver),
            warm: None,
            previous: None,
        })
    }

    /// `frame_theta` is the true angle field at `capture_time`; `t` is the
    /// tick time.
    pub fn tick(&mut self, scenario: &Scenario, frame_theta: &[f64], capture_time: f64, t: f64) -> Result<TickOutput> {
        let rod = &scenario.rod;
        let observation = self.observer.observe(frame_theta, rod, &scenario.bank, capture_time)?;
        let mut theta = observation.theta_estimate.clone();
        theta[0] = rod.base_angle;
        let mut omega = vec![0.0; theta.len()];
        if scenario.sim.estimate_velocity {
            if let Some((t_prev, prev)) = &self.previous {
                let gap = capture_time - t_prev;
                if gap > 0.0 {
                    for i in 1..theta.len() {
                        omega[i] = (theta[i] - prev[i]) / gap;
                    }
                }
            }
            self.previous = Some((capture_time, theta.clone()));
        }
        let estimate = RodState { theta, omega, time: t };
        let eps = Contraction::Uniform(observation.eps_estimates.clone());
        let problem = build_problem(
            &estimate,
            rod,
            &scenario.bank,
            Some(&eps),
            &scenario.target,
            &scenario.gains,
            t,
            scenario.sim.gain_mode,
        )?;
        let solution = self.solver.solve(&problem, self.warm.as_ref());
        self.warm = Some(solution.clone());
        Ok(TickOutput {
            observation,
            problem,
            solution,
        })
    }
}

/// Runs one scenario to convergence, timeout or numerical failure.
///
/// Component errors (invalid configuration) are returned as `Err`; a state
/// that blows up is reported through [`SimStatus::NumericalFailure`].
pub fn run_closed_loop(scenario: &Scenario) -> Result<SimResult> {
    run_with_hook(scenario, |_, _| {})
}

/// As [`run_closed_loop`], calling `on_tick` after every control tick.
pub fn run_with_hook(scenario: &Scenario, mut on_tick: impl FnMut(f64, &TickOutput)) -> Result<SimResult> {
    scenario.validate()?;
    let rod = &scenario.rod;
    let cfg = &scenario.sim;
    let n = rod.grid_size;
    let dt = cfg.effective_dt(rod);
    let n_steps = (cfg.t_end / dt).round() as usize;
    let mut next_record = 0usize;
    let n_markers = scenario.observer.n_markers;
    let stopping = cfg.stop_tol.is_finite();
    let weights = rod.quadrature_weights();

    let mut bank = scenario.bank.clone();
    let n_act = bank.len();
    let mut pressures = match cfg.actuation_mode {
        ActuationMode::OpenLoop => bank.pressures().to_vec(),
        _ => vec![0.0; n_act],
    };
    bank.set_pressures(&pressures)?;

    let mut state = scenario.start_state();
    let mut stepper = Stepper::new(n);
    let mut controller = Controller::new(scenario)?;
    let mut desired = scenario.target.sample(0.0);

    // frames as (capture time, θ)
    let mut frames: VecDeque<(f64, Vec<f64>)> = VecDeque::new();
    let frame_period = 1.0 / scenario.observer.frame_rate;
    let mut next_frame = 0usize;
    let mut next_tick = 0usize;
    let mut ticks = 0usize;
    let mut last_residual = 0.0;
    let mut last_status: Option<SolveStatus> = None;

    let mut samples: Vec<Sample> = Vec::new();
    let mut below_since: Option<f64> = None;
    let mut status = SimStatus::Timeout;

    let plant_damping = vec![rod.damping; n];
    let ideal_damping: Vec<f64> = scenario.gains.k_omega.clone();
    let mut l_c = vec![0.0; n];
    let mut l_g = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut stage = DesiredSample {
        theta: vec![0.0; n],
        omega: vec![0.0; n],
        accel: vec![0.0; n],
    };

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        state.time = t;

        while (next_frame as f64) * frame_period <= t + 0.5 * dt {
            frames.push_back((t, state.theta.clone()));
            next_frame += 1;
        }
        if cfg.actuation_mode == ActuationMode::QpPressures && (next_tick as f64) * cfg.control_period <= t + 0.5 * dt {
            let horizon = t - scenario.observer.latency + 0.5 * dt;
            while frames.len() > 1 && frames[1].0 <= horizon {
                frames.pop_front();
            }
            let (capture, frame) = frames.front().expect("frame captured at t = 0");
            let out = controller.tick(scenario, frame, *capture, t)?;
            pressures.copy_from_slice(&out.solution.pressures);
            bank.set_pressures(&pressures)?;
            last_residual = out.solution.residual;
            last_status = Some(out.solution.status);
            on_tick(t, &out);
            ticks += 1;
            next_tick += 1;
        }

        let due = (next_record as f64) * cfg.record_period <= t + 0.5 * dt;
        if due || k == n_steps {
            while (next_record as f64) * cfg.record_period <= t + 0.5 * dt {
                next_record += 1;
            }
            scenario.target.sample_into(t, &mut desired);
            let err_norm = marker_angle_error_norm(&state.theta, &desired.theta, rod, n_markers);
            let lyapunov = (0..n)
                .map(|i| {
                    let a = (state.theta[i] - desired.theta[i]).sin();
                    let b = state.omega[i] - desired.omega[i];
                    weights[i] * (a * a + b * b)
                })
                .sum();
            samples.push(Sample {
                t,
                err_norm,
                pressures: pressures.clone(),
                qp_residual: last_residual,
                qp_status: last_status,
                energy: elastic_energy_unchecked(&state.theta, &state.omega, rod),
                lyapunov,
            });
            if stopping {
                if err_norm <= cfg.stop_tol {
                    let since = *below_since.get_or_insert(t);
                    if t - since >= cfg.settle_time - 1e-9 {
                        status = SimStatus::Converged;
                        break;
                    }
                } else {
                    below_since = None;
                }
            }
        }
        if k == n_steps {
            break;
        }

        let stepped = match cfg.actuation_mode {
            ActuationMode::QpPressures | ActuationMode::OpenLoop => {
                for i in 0..n {
                    mid[i] = state.theta[i] + 0.5 * dt * state.omega[i];
                }
                let eps = plant_contraction(&mid, rod, &bank);
                bank.actuator_moment_into(&pressures, &Contraction::Uniform(eps), &mut l_c);
                horizontal_offsets_into(&mid, rod.spacing(), &mut y);
                gravity_torque_from_offsets(&y, rod, &mut l_g);
                stepper.advance(&mut state, rod, dt, &plant_damping, |theta, _, out| {
                    dynamics_rhs_into(theta, rod, &l_c, &l_g, out)
                })
            }
            ActuationMode::IdealLStar => {
                let target = &scenario.target;
                let gains = &scenario.gains;
                stepper.advance(&mut state, rod, dt, &ideal_damping, |theta, time, out| {
                    target.sample_into(time, &mut stage);
                    for i in 0..theta.len() {
                        out[i] = stage.accel[i] - gains.k_theta[i] * (theta[i] - stage.theta[i]).sin()
                            + gains.k_omega[i] * stage.omega[i];
                    }
                    out[0] = 0.0;
                })
            }
        };
        if let Err(Error::NumericalFailure { node, time }) = stepped {
            status = SimStatus::NumericalFailure { node, time };
            break;
        }
        stepped?;
    }

    let convergence_time = match status {
        SimStatus::Converged => {
            let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
            let errs: Vec<f64> = samples.iter().map(|s| s.err_norm).collect();
            convergence_metrics(&times, &errs, cfg.stop_tol, cfg.settle_time)
                .ok()
                .and_then(|m| m.convergence_time)
                .or(below_since)
        }
        _ => None,
    };
    Ok(SimResult {
        samples,
        convergence_time,
        final_state: state,
        status,
        control_ticks: ticks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    /// Decay rate `−d ln y/dt`, 1/s.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(t, ln y)`. Non-positive values are rejected.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Result<LogLinearFit> {
    check_len("values", y, t.len())?;
    if t.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: t.len() });
    }
    if let Some(&bad) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("values", bad, "must be positive for a log-linear fit"));
    }
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
    let sty: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::invalid("times", mt, "need at least two distinct times"));
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { (sty * sty) / (stt * syy) };
    Ok(LogLinearFit {
        rate: -slope,
        intercept: my - slope * mt,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceMetrics {
    /// First crossing below the tolerance that stays below for the settle
    /// time; interpolated log-linearly between samples.
    pub convergence_time: Option<f64>,
    /// Largest excess over the tolerance after the first crossing.
    pub overshoot: f64,
    /// From a log-linear fit before the first crossing (over the whole series
    /// when there is none); `None` with fewer than two usable samples.
    pub decay_rate: Option<f64>,
    pub r_squared: Option<f64>,
}

pub fn convergence_metrics(times: &[f64], errors: &[f64], stop_tol: f64, settle_time: f64) -> Result<ConvergenceMetrics> {
    check_len("errors", errors, times.len())?;
    if times.len() < 10 {
        return Err(Error::TooFewSamples {
            needed: 10,
            found: times.len(),
        });
    }
    let crossing_at = |k: usize| -> f64 {
        if k == 0 {
            return times[0];
        }
        let (a, b) = (errors[k - 1], errors[k]);
        if a > 0.0 && b > 0.0 && a != b {
            times[k - 1] + (times[k] - times[k - 1]) * (a / stop_tol).ln() / (a / b).ln()
        } else {
            times[k]
        }
    };
    let crossings: Vec<usize> = (0..errors.len())
        .filter(|&k| errors[k] <= stop_tol && (k == 0 || errors[k - 1] > stop_tol))
        .collect();
    let first = crossings.first().copied();
    let last_t = *times.last().unwrap();

    let mut convergence_time = None;
    for &k in &crossings {
        let tc = crossing_at(k);
        let end = tc + settle_time;
        let held = times
            .iter()
            .zip(errors)
            .skip(k)
            .take_while(|(t, _)| **t <= end + 1e-12)
            .all(|(_, e)| *e <= stop_tol);
        if held && last_t >= end - 1e-9 {
            convergence_time = Some(tc);
            break;
        }
    }

    let overshoot = match first {
        Some(k) => errors[k..].iter().fold(0.0_f64, |m, e| m.max(e - stop_tol)),
        None => 0.0,
    };

    let fit_end = first.unwrap_or(errors.len());
    let (ft, fe): (Vec<f64>, Vec<f64>) = times[..fit_end]
        .iter()
        .zip(&errors[..fit_end])
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(t, e)| (*t, *e))
        .unzip();
    let fit = log_linear_fit(&ft, &fe).ok();
    Ok(ConvergenceMetrics {
        convergence_time,
        overshoot,
        decay_rate: fit.map(|f| f.rate),
        r_squared: fit.map(|f| f.r_squared),
    })
}

/// Static shape reached under constant pressures.
///
/// The actuator moment is uniform along the rod (one contraction per
/// actuator) and so is the gravity moment, so the discrete static balance
/// `E J D₂θ + l_c + l_g = 0` is solved exactly by the parabola
/// `θ = θ₀ + Δ(2s/L − s²/L²)`. The bend `Δ` is found by bisection.
pub fn open_loop_equilibrium(
    params: &RodParams,
    bank: &ActuatorBank,
    pressures: &[f64],
) -> Result<Vec<f64>> {
    params.validate()?;
    check_len("pressures", pressures, bank.len())?;
    let mut bank = bank.clone();
    bank.set_pressures(pressures)?;
    let s = params.arc_lengths();
    let l = params.length;
    let shape = |delta: f64| -> Vec<f64> {
        s.iter()
            .map(|&si| params.base_angle + delta * (2.0 * si / l - si * si / (l * l)))
            .collect()
    };
    let n = params.grid_size;
    let imbalance = |delta: f64| -> Result<f64> {
        let theta = shape(delta);
        let eps = plant_contraction(&theta, params, &bank);
        let mut lc = vec![0.0; n];
        bank.actuator_moment_into(pressures, &Contraction::Uniform(eps), &mut lc);
        let lg = gravity_torque(&RodState::at_rest(theta), params)?;
        let load = (lc[n - 1] + lg[n - 1] + lc[1] + lg[1]) * 0.5;
        Ok(load - 2.0 * params.bending_stiffness() * delta / (l * l))
    };

    let f0 = imbalance(0.0)?;
    if f0 == 0.0 {
        return Ok(shape(0.0));
    }
    let dir = f0.signum();
    let mut lo = 0.0;
    let mut hi = 0.25 * dir;
    let mut fhi = imbalance(hi)?;
    while fhi.signum() == dir {
        lo = hi;
        hi *= 2.0;
        if hi.abs() > 256.0 {
            return Err(Error::invalid("pressures", pressures[0], "no static equilibrium found"));
        }
        fhi = imbalance(hi)?;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = imbalance(mid)?;
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm.signum() == dir {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(shape(0.5 * (lo + hi)))
}
