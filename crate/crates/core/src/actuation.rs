//! Fabric series pneumatic artificial muscles modeled as ideal McKibben
//! actuators, and the distributed moment they exert on the backbone.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// One actuator. `a`, `b` and the force zero-crossing `eps_max` are derived
/// from the braid angle on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorParams {
    initial_radius: f64,
    braid_angle: f64,
    moment_arm: f64,
    p_max: f64,
    a: f64,
    b: f64,
    eps_max: f64,
}

impl ActuatorParams {
    /// `moment_arm` is signed: its sign is the sign of the moment the actuator
    /// produces when pressurized.
    pub fn new(initial_radius: f64, braid_angle: f64, moment_arm: f64, p_max: f64) -> Result<Self> {
        if !(initial_radius.is_finite() && initial_radius > 0.0) {
            return Err(Error::invalid("actuators.initial_radius", initial_radius, "must be positive"));
        }
        if !(braid_angle > 0.0 && braid_angle < PI / 2.0) {
            return Err(Error::invalid("actuators.braid_angle", braid_angle, "must lie in (0, π/2)"));
        }
        if !(moment_arm.is_finite() && moment_arm != 0.0) {
            return Err(Error::invalid("actuators.moment_arm", moment_arm, "must be finite and non-zero"));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::invalid("actuators.p_max", p_max, "must be finite and positive"));
        }
        let tan = braid_angle.tan();
        let sin = braid_angle.sin();
        let a = 3.0 / (tan * tan);
        let b = 1.0 / (sin * sin);
        let eps_max = if a > b { 1.0 - (b / a).sqrt() } else { 0.0 };
        Ok(Self {
            initial_radius,
            braid_angle,
            moment_arm,
            p_max,
            a,
            b,
            eps_max,
        })
    }

    pub fn initial_radius(&self) -> f64 {
        self.initial_radius
    }
    pub fn braid_angle(&self) -> f64 {
        self.braid_angle
    }
    pub fn moment_arm(&self) -> f64 {
        self.moment_arm
    }
    pub fn p_max(&self) -> f64 {
        self.p_max
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    /// Contraction at which the ideal force vanishes.
    pub fn eps_max(&self) -> f64 {
        self.eps_max
    }

    pub fn clamp_contraction(&self, eps: f64) -> f64 {
        if eps.is_nan() {
            return 0.0;
        }
        eps.clamp(0.0, self.eps_max)
    }

    /// `π r₀² P [a(1−ε)² − b]` with `ε` clamped to `[0, eps_max]`. A slack
    /// actuator (ε < 0) cannot push and behaves as if at rest length.
    pub fn ideal_force(&self, pressure: f64, eps: f64) -> Result<f64> {
        if !(pressure >= 0.0) {
            return Err(Error::NegativePressure(pressure));
        }
        Ok(pressure * self.force_per_pascal(eps))
    }

    /// Force per unit pressure; the ideal force is linear in `P`.
    pub fn force_per_pascal(&self, eps: f64) -> f64 {
        let e = self.clamp_contraction(eps);
        let r0 = self.initial_radius;
        let shape = (self.a * (1.0 - e) * (1.0 - e) - self.b).max(0.0);
        PI * r0 * r0 * shape
    }
}

/// Per-actuator contraction, either one value per actuator or a field over
/// the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Uniform(Vec<f64>),
    /// `PerNode(fields)[j][i]` is actuator `j` at node `i`.
    PerNode(Vec<Vec<f64>>),
}

impl Contraction {
    pub fn at(&self, actuator: usize, node: usize) -> f64 {
        match self {
            Contraction::Uniform(v) => v[actuator],
            Contraction::PerNode(f) => f[actuator][node],
        }
    }

    pub fn actuator_count(&self) -> usize {
        match self {
            Contraction::Uniform(v) => v.len(),
            Contraction::PerNode(f) => f.len(),
        }
    }

    fn check(&self, n_act: usize, n_nodes: usize) -> Result<()> {
        if self.actuator_count() != n_act {
            return Err(Error::DimensionMismatch {
                field: "contraction",
                expected: n_act,
                found: self.actuator_count(),
            });
        }
        if let Contraction::PerNode(fields) = self {
            for f in fields {
                crate::error::check_len("contraction", f, n_nodes)?;
            }
        }
        Ok(())
    }
}

/// Ordered actuators with their commanded pressures.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorBank {
    actuators: Vec<ActuatorParams>,
    pressures: Vec<f64>,
}

impl ActuatorBank {
    pub fn new(actuators: Vec<ActuatorParams>) -> Self {
        let n = actuators.len();
        Self {
            actuators,
            pressures: vec![0.0; n],
        }
    }

    /// Two identical actuators on opposite sides of the backbone: actuator 0
    /// at `+moment_arm`, actuator 1 at `−moment_arm`.
    pub fn antagonistic_pair(
        initial_radius: f64,
        braid_angle: f64,
        moment_arm: f64,
        p_max: f64,
    ) -> Result<Self> {
        let d = moment_arm.abs();
        Ok(Self::new(vec![
            ActuatorParams::new(initial_radius, braid_angle, d, p_max)?,
            ActuatorParams::new(initial_radius, braid_angle, -d, p_max)?,
        ]))
    }

    pub fn actuators(&self) -> &[ActuatorParams] {
        &self.actuators
    }

    pub fn len(&self) -> usize {
        self.actuators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuators.is_empty()
    }

    pub fn pressures(&self) -> &[f64] {
        &self.pressures
    }

    pub fn set_pressures(&mut self, pressures: &[f64]) -> Result<()> {
        crate::error::check_len("pressures", pressures, self.len())?;
        self.check_pressures(pressures)?;
        self.pressures.copy_from_slice(pressures);
        Ok(())
    }

    fn check_pressures(&self, pressures: &[f64]) -> Result<()> {
        for (j, (act, &p)) in self.actuators.iter().zip(pressures).enumerate() {
            if !(p >= 0.0 && p <= act.p_max) {
                return Err(Error::PressureOutOfBounds {
                    actuator: j,
                    pressure: p,
                    p_max: act.p_max,
                });
            }
        }
        Ok(())
    }

    /// `l_c(s_i) = Σ_j F_j(P_j, ε_j(s_i)) d_j` at the current pressures.
    pub fn actuator_moment(&self, eps: &Contraction, n_nodes: usize) -> Result<Vec<f64>> {
        eps.check(self.len(), n_nodes)?;
        self.check_pressures(&self.pressures)?;
        let mut out = vec![0.0; n_nodes];
        self.actuator_moment_into(&self.pressures, eps, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation at arbitrary pressures.
    pub fn actuator_moment_into(&self, pressures: &[f64], eps: &Contraction, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, act) in self.actuators.iter().enumerate() {
            let p = pressures[j];
            if p == 0.0 {
                continue;
            }
            match eps {
                Contraction::Uniform(v) => {
                    let m = p * act.force_per_pascal(v[j]) * act.moment_arm;
                    out.iter_mut().for_each(|o| *o += m);
                }
                Contraction::PerNode(f) => {
                    for (o, &e) in out.iter_mut().zip(&f[j]) {
                        *o += p * act.force_per_pascal(e) * act.moment_arm;
                    }
                }
            }
        }
    }

    /// Matrix `B` (nodes × actuators) with `l_c = B P`; column `j` is the
    /// moment field of actuator `j` alone at unit pressure.
    pub fn moment_to_pressure_matrix(&self, eps: &Contraction, n_nodes: usize) -> Result<DMatrix<f64>> {
        eps.check(self.len(), n_nodes)?;
        self.check_pressures(&self.pressures)?;
        Ok(DMatrix::from_fn(n_nodes, self.len(), |i, j| {
            let act = &self.actuators[j];
            act.force_per_pascal(eps.at(j, i)) * act.moment_arm
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DEG45: f64 = PI / 4.0;

    fn act(d: f64) -> ActuatorParams {
        ActuatorParams::new(0.015, DEG45, d, 50e3).unwrap()
    }

    #[test]
    fn braid_constants_at_45_degrees() {
        let a = act(0.018);
        assert!((a.a() - 3.0).abs() < 1e-12);
        assert!((a.b() - 2.0).abs() < 1e-12);
        assert!((a.eps_max() - (1.0 - (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((a.eps_max() - 0.1835).abs() < 1e-4);
    }

    #[test]
    fn zero_pressure_zero_force() {
        let a = act(0.018);
        for eps in [0.0, 0.05, 0.1, 0.3] {
            assert_eq!(a.ideal_force(0.0, eps).unwrap(), 0.0);
        }
    }

    #[test]
    fn force_at_30_kpa_rest_length() {
        let f = act(0.018).ideal_force(30e3, 0.0).unwrap();
        let expected = PI * 0.015 * 0.015 * 30e3;
        assert!((f - expected).abs() < 1e-9);
        assert!((f - 21.21).abs() < 5e-3);
    }

    #[test]
    fn force_vanishes_at_eps_max_and_beyond() {
        let a = act(0.018);
        assert!(a.ideal_force(30e3, a.eps_max()).unwrap().abs() < 1e-12);
        assert_eq!(a.ideal_force(30e3, 0.5).unwrap(), 0.0);
        // slack actuator behaves as at rest length
        assert_eq!(a.ideal_force(1e4, -0.2).unwrap(), a.ideal_force(1e4, 0.0).unwrap());
    }

    #[test]
    fn negative_pressure_rejected() {
        assert_eq!(act(0.018).ideal_force(-1.0, 0.0), Err(Error::NegativePressure(-1.0)));
    }

    #[test]
    fn invalid_braid_angle_rejected() {
        assert!(ActuatorParams::new(0.015, PI / 2.0, 0.018, 1e4).is_err());
        assert!(ActuatorParams::new(0.015, 0.0, 0.018, 1e4).is_err());
    }

    #[test]
    fn single_actuator_moment_hand_value() {
        let mut bank = ActuatorBank::new(vec![act(0.018)]);
        bank.set_pressures(&[10e3]).unwrap();
        let lc = bank.actuator_moment(&Contraction::Uniform(vec![0.05]), 11).unwrap();
        let expected = PI * 2.25e-4 * 1e4 * (3.0 * 0.9025 - 2.0) * 0.018;
        // spreadsheet-style recomputation, one factor at a time
        let area = 3.141592653589793 * 0.015 * 0.015;
        let bracket = 3.0 * 0.95 * 0.95 - 2.0;
        assert!((expected - area * 1e4 * bracket * 0.018).abs() < 1e-15);
        assert!((expected - 9.03e-2).abs() < 5e-4);
        for v in lc {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn antagonistic_cancellation() {
        let mut bank = ActuatorBank::antagonistic_pair(0.015, DEG45, 0.018, 50e3).unwrap();
        bank.set_pressures(&[12e3, 12e3]).unwrap();
        let lc = bank.actuator_moment(&Contraction::Uniform(vec![0.07, 0.07]), 21).unwrap();
        assert!(lc.iter().all(|v| v.abs() < 1e-15));
        bank.set_pressures(&[0.0, 0.0]).unwrap();
        let lc = bank.actuator_moment(&Contraction::Uniform(vec![0.07, 0.0]), 21).unwrap();
        assert!(lc.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pressure_bound_violation_names_actuator() {
        let mut bank = ActuatorBank::antagonistic_pair(0.015, DEG45, 0.018, 50e3).unwrap();
        match bank.set_pressures(&[1e3, 60e3]) {
            Err(Error::PressureOutOfBounds { actuator, .. }) => assert_eq!(actuator, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matrix_reproduces_direct_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 31;
        let mut bank = ActuatorBank::antagonistic_pair(0.015, DEG45, 0.018, 50e3).unwrap();
        let eps = Contraction::PerNode(
            (0..2).map(|_| (0..n).map(|_| rng.random_range(-0.05..0.25)).collect()).collect(),
        );
        let b = bank.moment_to_pressure_matrix(&eps, n).unwrap();
        for _ in 0..100 {
            let p = [rng.random_range(0.0..50e3), rng.random_range(0.0..50e3)];
            bank.set_pressures(&p).unwrap();
            let direct = bank.actuator_moment(&eps, n).unwrap();
            for i in 0..n {
                let via = b[(i, 0)] * p[0] + b[(i, 1)] * p[1];
                assert!((via - direct[i]).abs() <= 1e-12 * direct[i].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn saturated_actuator_column_is_zero() {
        let bank = ActuatorBank::antagonistic_pair(0.015, DEG45, 0.018, 50e3).unwrap();
        let emax = bank.actuators()[0].eps_max();
        let b = bank.moment_to_pressure_matrix(&Contraction::Uniform(vec![emax, 0.0]), 7).unwrap();
        assert!(b.column(0).iter().all(|v| v.abs() < 1e-15));
        assert!(b.column(1).iter().all(|v| *v < 0.0));
    }

    #[test]
    fn doubling_radius_quadruples_matrix() {
        let eps = Contraction::Uniform(vec![0.04, 0.0]);
        let small = ActuatorBank::antagonistic_pair(0.015, DEG45, 0.018, 50e3).unwrap();
        let big = ActuatorBank::antagonistic_pair(0.030, DEG45, 0.018, 50e3).unwrap();
        let b1 = small.moment_to_pressure_matrix(&eps, 5).unwrap();
        let b2 = big.moment_to_pressure_matrix(&eps, 5).unwrap();
        for (x, y) in b1.iter().zip(b2.iter()) {
            assert!((4.0 * x - y).abs() <= 1e-15 * y.abs());
        }
    }

    proptest! {
        #[test]
        fn force_monotone_in_contraction(p in 1.0f64..5e4, e1 in 0.0f64..0.1835, e2 in 0.0f64..0.1835) {
            let a = act(0.018);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(a.ideal_force(p, hi).unwrap() <= a.ideal_force(p, lo).unwrap());
        }

        #[test]
        fn force_linear_in_pressure(p in 0.0f64..5e4, e in -0.1f64..0.3) {
            let a = act(0.018);
            let f1 = a.ideal_force(p, e).unwrap();
            let f2 = a.ideal_force(2.0 * p, e).unwrap();
            prop_assert!((f2 - 2.0 * f1).abs() <= 1e-15 * f2.abs());
        }

        #[test]
        fn moment_sign_follows_arm(p in 1.0f64..5e4, e in 0.0f64..0.18, d in 0.001f64..0.05, flip in any::<bool>()) {
            let arm = if flip { -d } else { d };
            let mut bank = ActuatorBank::new(vec![act(arm)]);
            bank.set_pressures(&[p]).unwrap();
            let lc = bank.actuator_moment(&Contraction::Uniform(vec![e]), 3).unwrap();
            prop_assert!(lc.iter().all(|v| v.signum() == arm.signum()));
        }
    }
}
