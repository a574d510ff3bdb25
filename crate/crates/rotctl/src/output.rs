//! CSV and JSON artifacts of a run.
//!
//! Numbers are written with `{:.10e}` (11 significant digits) so files are
//! locale independent and byte-stable across reruns.

use std::io::{self, Write};

use serde_json::{json, Value};

use rotctl_core::qp::SolveStatus;
use rotctl_core::rod::reconstruct_centerline;
use rotctl_core::sim::{Scenario, SimResult, SimStatus};

pub const TIMESERIES_HEADER: [&str; 7] = ["t_s", "err_norm_rad", "p1_pa", "p2_pa", "qp_residual", "energy_j", "status"];
pub const FINAL_SHAPE_HEADER: [&str; 4] = ["s_m", "y_m", "z_m", "theta_rad"];

pub fn num(v: f64) -> String {
    format!("{v:.10e}")
}

pub fn qp_status_name(s: Option<SolveStatus>) -> &'static str {
    match s {
        None => "none",
        Some(SolveStatus::Optimal) => "optimal",
        Some(SolveStatus::MaxIter) => "max_iter",
        Some(SolveStatus::InfeasibleInput) => "infeasible_input",
    }
}

pub fn sim_status_name(s: &SimStatus) -> &'static str {
    match s {
        SimStatus::Converged => "converged",
        SimStatus::Timeout => "timeout",
        SimStatus::NumericalFailure { .. } => "numerical_failure",
    }
}

/// One row per recorded sample. `status` is the allocation solver status of
/// the pressures in force (`none` before the first tick and outside QP mode).
pub fn write_timeseries(w: impl Write, result: &SimResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TIMESERIES_HEADER)?;
    for s in &result.samples {
        let p = |j: usize| s.pressures.get(j).copied().unwrap_or(0.0);
        out.write_record([
            num(s.t),
            num(s.err_norm),
            num(p(0)),
            num(p(1)),
            num(s.qp_residual),
            num(s.energy),
            qp_status_name(s.qp_status).to_string(),
        ])?;
    }
    out.flush()
}

pub fn write_final_shape(w: impl Write, scenario: &Scenario, result: &SimResult) -> io::Result<()> {
    let rod = &scenario.rod;
    let theta = &result.final_state.theta;
    let line = reconstruct_centerline(theta, rod).map_err(io::Error::other)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FINAL_SHAPE_HEADER)?;
    for (i, s) in rod.arc_lengths().iter().enumerate() {
        let [y, z] = line.positions[i];
        out.write_record([num(*s), num(y), num(z), num(theta[i])])?;
    }
    out.flush()
}

pub fn summary(name: &str, scenario: &Scenario, result: &SimResult) -> Value {
    let metrics = result.metrics(&scenario.sim).ok();
    let last = result.samples.last();
    let failure = match result.status {
        SimStatus::NumericalFailure { node, time } => json!({ "node": node, "time_s": time }),
        _ => Value::Null,
    };
    json!({
        "scenario": name,
        "status": sim_status_name(&result.status),
        "convergence_time_s": result.convergence_time,
        "overshoot_rad": metrics.map(|m| m.overshoot),
        "decay_rate_per_s": metrics.and_then(|m| m.decay_rate),
        "r_squared": metrics.and_then(|m| m.r_squared),
        "final_err_norm_rad": last.map(|s| s.err_norm),
        "final_pressures_pa": last.map(|s| s.pressures.clone()),
        "final_time_s": last.map(|s| s.t),
        "stop_tol": scenario.sim.stop_tol,
        "seed": scenario.observer.seed,
        "samples": result.samples.len(),
        "control_ticks": result.control_ticks,
        "numerical_failure": failure,
    })
}
