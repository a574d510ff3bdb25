use core::f64::consts::PI;

use rotctl_core::actuation::ActuatorBank;
use rotctl_core::control::{DesiredTrajectory, GainProfile};
use rotctl_core::observer::ObserverConfig;
use rotctl_core::rod::{RodParams, RodState};
use rotctl_core::sim::{open_loop_equilibrium, run_closed_loop, ActuationMode, Scenario, SimConfig, SimStatus};
use rotctl_core::Error;

fn bank() -> ActuatorBank {
    ActuatorBank::antagonistic_pair(0.015, PI / 4.0, 0.018, 50e3).unwrap()
}

fn scenario(mode: ActuationMode, target: DesiredTrajectory) -> Scenario {
    let rod = RodParams {
        damping: 100.0,
        ..RodParams::default()
    };
    let n = rod.grid_size;
    Scenario {
        target,
        gains: GainProfile::uniform(n, 1e5, 1e3),
        bank: bank(),
        observer: ObserverConfig::default(),
        sim: SimConfig {
            t_end: 3.0,
            actuation_mode: mode,
            ..SimConfig::default()
        },
        rod,
        initial_state: None,
    }
}

#[test]
fn ideal_mode_error_decays() {
    let rod = RodParams::default();
    let mut sc = scenario(ActuationMode::IdealLStar, DesiredTrajectory::arc(&rod, 2.0));
    sc.sim.stop_tol = f64::INFINITY;
    sc.sim.t_end = 0.5;
    sc.sim.record_period = 1e-3;
    let r = run_closed_loop(&sc).unwrap();
    assert_eq!(r.status, SimStatus::Timeout);
    let v: Vec<f64> = r.samples.iter().map(|s| s.lyapunov).collect();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(v.last().unwrap() < &(1e-4 * v[0]));
}

#[test]
fn qp_mode_reaches_an_open_loop_equilibrium() {
    let rod = RodParams {
        damping: 100.0,
        ..RodParams::default()
    };
    let goal = open_loop_equilibrium(&rod, &bank(), &[15e3, 0.0]).unwrap();
    let mut sc = scenario(ActuationMode::QpPressures, DesiredTrajectory::snapshot(goal));
    sc.sim.t_end = 20.0;
    let r = run_closed_loop(&sc).unwrap();
    assert_eq!(r.status, SimStatus::Converged);
    let last = r.samples.last().unwrap();
    assert!(last.err_norm <= sc.sim.stop_tol);
    assert!(last.pressures[0] > last.pressures[1]);
}

#[test]
fn open_loop_settles_on_the_equilibrium() {
    let rod = RodParams {
        damping: 100.0,
        ..RodParams::default()
    };
    let mut b = bank();
    b.set_pressures(&[8e3, 0.0]).unwrap();
    let goal = open_loop_equilibrium(&rod, &b, &[8e3, 0.0]).unwrap();
    let mut sc = scenario(ActuationMode::OpenLoop, DesiredTrajectory::snapshot(goal.clone()));
    sc.bank = b;
    sc.sim.t_end = 5.0;
    sc.sim.stop_tol = f64::INFINITY;
    let r = run_closed_loop(&sc).unwrap();
    let err = r.final_state.theta.iter().zip(&goal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "max angle error {err}");
}

#[test]
fn runs_are_reproducible_per_seed() {
    let rod = RodParams::default();
    let mut sc = scenario(ActuationMode::QpPressures, DesiredTrajectory::arc(&rod, 1.0));
    sc.observer.position_noise_std = 1e-3;
    sc.sim.t_end = 1.0;
    sc.observer.seed = 11;
    let a = run_closed_loop(&sc).unwrap();
    let b = run_closed_loop(&sc).unwrap();
    assert_eq!(a, b);
    sc.observer.seed = 12;
    let c = run_closed_loop(&sc).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn cfl_violation_is_rejected() {
    let rod = RodParams::default();
    let mut sc = scenario(ActuationMode::IdealLStar, DesiredTrajectory::arc(&rod, 1.0));
    sc.sim.dt = Some(1.01 * rod.cfl_limit());
    match run_closed_loop(&sc) {
        Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "sim.dt"),
        other => panic!("expected sim.dt rejection, got {other:?}"),
    }
}

#[test]
fn wrong_initial_length_is_rejected() {
    let rod = RodParams::default();
    let mut sc = scenario(ActuationMode::IdealLStar, DesiredTrajectory::arc(&rod, 1.0));
    sc.initial_state = Some(RodState::at_rest(vec![0.0; rod.grid_size - 1]));
    assert!(run_closed_loop(&sc).is_err());
}
