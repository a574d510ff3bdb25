//! Synthetic marker camera and shape estimation.
//!
//! Markers sit at equally spaced arc lengths from the base to the tip. Each
//! reports a position and an orientation angle, optionally corrupted by
//! Gaussian noise. The angle field is rebuilt by monotone cubic interpolation
//! and the bend is summarized by one algebraic circle fit, from which the
//! actuator contractions follow as `ε = d/r`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::actuation::ActuatorBank;
use crate::error::{check_finite, check_len, Error, Result};
use crate::rod::{reconstruct_centerline, Centerline, RodParams};

/// Fits with a radius beyond this many rod lengths count as straight.
pub const STRAIGHT_RADIUS_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub n_markers: usize,
    /// m, per coordinate
    pub position_noise_std: f64,
    /// rad
    pub angle_noise_std: f64,
    /// Hz
    pub frame_rate: f64,
    /// s, age of the frame used at a control tick
    pub latency: f64,
    pub seed: u64,
    /// Half-open marker index range used for the circle fit; `None` uses all.
    pub fit_window: Option<(usize, usize)>,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            n_markers: 10,
            position_noise_std: 0.0,
            angle_noise_std: 0.0,
            frame_rate: 30.0,
            latency: 0.5,
            seed: 0,
            fit_window: None,
        }
    }
}

impl ObserverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_markers < 3 {
            return Err(Error::invalid("observer.n_markers", self.n_markers as f64, "need at least 3 markers"));
        }
        if !(self.position_noise_std >= 0.0 && self.position_noise_std.is_finite()) {
            return Err(Error::invalid(
                "observer.position_noise_std",
                self.position_noise_std,
                "must be finite and non-negative",
            ));
        }
        if !(self.angle_noise_std >= 0.0 && self.angle_noise_std.is_finite()) {
            return Err(Error::invalid(
                "observer.angle_noise_std",
                self.angle_noise_std,
                "must be finite and non-negative",
            ));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::invalid("observer.frame_rate", self.frame_rate, "must be positive"));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(Error::invalid("observer.latency", self.latency, "must be finite and non-negative"));
        }
        if let Some((a, b)) = self.fit_window {
            if b > self.n_markers || b < a + 3 {
                return Err(Error::invalid(
                    "observer.fit_window",
                    (b as f64) - (a as f64),
                    "must select at least 3 markers within n_markers",
                ));
            }
        }
        Ok(())
    }

    fn window(&self) -> (usize, usize) {
        self.fit_window.unwrap_or((0, self.n_markers))
    }
}

/// Arc lengths of `n` markers spread from the base to the tip.
pub fn marker_arc_lengths(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|k| length * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet {
    pub arc_lengths: Vec<f64>,
    /// (y, z), m
    pub positions: Vec<[f64; 2]>,
    pub angles: Vec<f64>,
}

/// Noise-free markers, linearly interpolated between grid nodes. The
/// positions lie on the reconstructed polyline.
pub fn exact_markers(centerline: &Centerline, theta: &[f64], params: &RodParams, n_markers: usize) -> MarkerSet {
    let ds = params.spacing();
    let last = theta.len() - 1;
    let arc_lengths = marker_arc_lengths(n_markers, params.length);
    let mut positions = Vec::with_capacity(n_markers);
    let mut angles = Vec::with_capacity(n_markers);
    for &s in &arc_lengths {
        let u = s / ds;
        let i = (u.floor() as usize).min(last - 1);
        let f = (u - i as f64).clamp(0.0, 1.0);
        let a = centerline.positions[i];
        let b = centerline.positions[i + 1];
        positions.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        angles.push(theta[i] + f * (theta[i + 1] - theta[i]));
    }
    MarkerSet {
        arc_lengths,
        positions,
        angles,
    }
}

/// Result of an algebraic circle fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: [f64; 2],
    /// m; infinite for exactly collinear points
    pub radius: f64,
    /// RMS geometric distance of the points to the fitted circle (or line).
    pub rms_residual: f64,
    pub straight: bool,
}

impl CircleFit {
    /// Signed-free curvature `1/r`, zero when straight.
    pub fn curvature(&self) -> f64 {
        if self.straight {
            0.0
        } else {
            1.0 / self.radius
        }
    }
}

/// Pratt's algebraic circle fit.
///
/// Minimizes the algebraic distance of `A(y² + z²) + B y + C z + D = 0` under
/// the normalization `B² + C² − 4AD = 1`. `length` sets the straightness
/// threshold `radius > 10³·length`.
pub fn pratt_circle_fit(points: &[[f64; 2]], length: f64) -> Result<CircleFit> {
    for p in points {
        check_finite("points", p)?;
    }
    let distinct = count_distinct(points);
    if distinct < 3 {
        return Err(Error::TooFewPoints(distinct));
    }
    let n = points.len() as f64;
    let my = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let mz = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let spread = (points
        .iter()
        .map(|p| (p[0] - my).powi(2) + (p[1] - mz).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let local: Vec<[f64; 2]> = points.iter().map(|p| [(p[0] - my) / spread, (p[1] - mz) / spread]).collect();

    // Pad to at least four rows so the SVD exposes the full right basis.
    let rows = local.len().max(4);
    let z = DMatrix::from_fn(rows, 4, |i, j| {
        if i >= local.len() {
            return 0.0;
        }
        let [y, w] = local[i];
        match j {
            0 => y * y + w * w,
            1 => y,
            2 => w,
            _ => 1.0,
        }
    });
    let svd = z.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let s = svd.singular_values;
    let (kmin, smin) = s.iter().enumerate().fold((0, f64::INFINITY), |a, (k, v)| if *v < a.1 { (k, *v) } else { a });
    let smax = s.max();

    let coeffs: [f64; 4] = if smin <= 1e-12 * smax {
        // interpolating circle: exact null vector
        let r = vt.row(kmin);
        [r[0], r[1], r[2], r[3]]
    } else {
        let v = vt.transpose();
        let sdiag = Matrix4::from_diagonal(&nalgebra::Vector4::new(s[0], s[1], s[2], s[3]));
        let v4 = Matrix4::from_fn(|i, j| v[(i, j)]);
        let y = v4 * sdiag * v4.transpose();
        let binv = Matrix4::new(
            0.0, 0.0, 0.0, -0.5, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            -0.5, 0.0, 0.0, 0.0,
        );
        let m = y * binv * y;
        let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
        // The constraint has signature (+, +, +, −): one eigenvalue is
        // strongly negative and the sought one is the smallest of the rest,
        // which may round to a tiny negative number for near-exact data.
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        let k = order[1];
        let w = eig.eigenvectors.column(k);
        let sinv = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0 / s[0], 1.0 / s[1], 1.0 / s[2], 1.0 / s[3]));
        let a = v4 * sinv * v4.transpose() * w;
        [a[0], a[1], a[2], a[3]]
    };

    let [a, b, c, d] = coeffs;
    let disc = b * b + c * c - 4.0 * a * d;
    let radius_local = disc.sqrt() / (2.0 * a.abs());
    let radius = radius_local * spread;
    let straight = !(radius.is_finite() && radius <= STRAIGHT_RADIUS_FACTOR * length);
    if !radius.is_finite() {
        // exact line `b y + c z + d = 0`
        let norm = b.hypot(c);
        let rms = (local.iter().map(|p| ((b * p[0] + c * p[1] + d) / norm).powi(2)).sum::<f64>() / n).sqrt();
        return Ok(CircleFit {
            center: [f64::INFINITY, f64::INFINITY],
            radius: f64::INFINITY,
            rms_residual: rms * spread,
            straight: true,
        });
    }
    let cy = -b / (2.0 * a);
    let cz = -c / (2.0 * a);
    let rms = (local
        .iter()
        .map(|p| ((p[0] - cy).hypot(p[1] - cz) - radius_local).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CircleFit {
        center: [my + spread * cy, mz + spread * cz],
        radius,
        rms_residual: rms * spread,
        straight,
    })
}

fn count_distinct(points: &[[f64; 2]]) -> usize {
    let mut distinct: Vec<[f64; 2]> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| q == p) {
            distinct.push(*p);
            if distinct.len() >= 3 {
                break;
            }
        }
    }
    distinct.len()
}

/// Contraction per actuator for a bend of radius `radius` (infinite when
/// straight). The actuator whose moment sign matches `bend_sign` is on the
/// inner side and gets `ε = |d|/r`; the other is slack.
pub fn estimate_contraction(radius: f64, bank: &ActuatorBank, bend_sign: f64) -> Result<Vec<f64>> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::NonPositiveRadius(radius));
    }
    Ok(bank
        .actuators()
        .iter()
        .map(|a| {
            let d = a.moment_arm();
            if radius.is_infinite() || bend_sign == 0.0 || d == 0.0 || d.signum() != bend_sign.signum() {
                0.0
            } else {
                a.clamp_contraction(d.abs() / radius)
            }
        })
        .collect())
}

/// Bend direction from the marker angles: `+1` when the angle grows toward
/// the tip.
pub fn bend_sign(angles: &[f64]) -> f64 {
    let delta = angles[angles.len() - 1] - angles[0];
    if delta > 0.0 {
        1.0
    } else if delta < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Monotone piecewise cubic (Fritsch–Carlson) interpolation of marker angles
/// onto the grid; constant beyond the outermost markers.
pub fn reconstruct_theta(arc_lengths: &[f64], angles: &[f64], params: &RodParams) -> Result<Vec<f64>> {
    check_len("marker angles", angles, arc_lengths.len())?;
    if arc_lengths.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: arc_lengths.len(),
        });
    }
    check_finite("marker angles", angles)?;
    let x = arc_lengths;
    let m = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&bad) = h.iter().find(|h| !(**h > 0.0)) {
        return Err(Error::invalid("marker arc lengths", bad, "must be strictly increasing"));
    }
    let delta: Vec<f64> = (0..m - 1).map(|k| (angles[k + 1] - angles[k]) / h[k]).collect();
    let mut slope = vec![0.0; m];
    if m == 2 {
        slope = vec![delta[0]; 2];
    } else {
        for k in 1..m - 1 {
            let (a, b) = (delta[k - 1], delta[k]);
            if a * b > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slope[k] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        slope[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        slope[m - 1] = end_slope(h[m - 2], h[m - 3], delta[m - 2], delta[m - 3]);
    }

    let mut out = vec![0.0; params.grid_size];
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let s = params.length * i as f64 / (params.grid_size - 1) as f64;
        if s <= x[0] {
            *o = angles[0];
            continue;
        }
        if s >= x[m - 1] {
            *o = angles[m - 1];
            continue;
        }
        while k + 1 < m - 1 && s > x[k + 1] {
            k += 1;
        }
        let t = (s - x[k]) / h[k];
        let t2 = t * t;
        let t3 = t2 * t;
        *o = angles[k]
            + (3.0 * t2 - 2.0 * t3) * (angles[k + 1] - angles[k])
            + h[k] * ((t3 - 2.0 * t2 + t) * slope[k] + (t3 - t2) * slope[k + 1]);
    }
    Ok(out)
}

/// Shape-preserving three-point end slope.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// What the controller sees from one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub marker_positions: Vec<[f64; 2]>,
    pub marker_angles: Vec<f64>,
    pub theta_estimate: Vec<f64>,
    /// One entry per fitted section, 1/m (zero when straight).
    pub curvature_estimate: Vec<f64>,
    pub eps_estimates: Vec<f64>,
    pub straight: bool,
    /// s
    pub capture_time: f64,
}

/// Fit and contraction from a marker set.
pub fn shape_summary(
    markers: &MarkerSet,
    window: (usize, usize),
    params: &RodParams,
    bank: &ActuatorBank,
) -> Result<(CircleFit, Vec<f64>)> {
    let fit = pratt_circle_fit(&markers.positions[window.0..window.1], params.length)?;
    let radius = if fit.straight { f64::INFINITY } else { fit.radius };
    let eps = estimate_contraction(radius, bank, bend_sign(&markers.angles[window.0..window.1]))?;
    Ok((fit, eps))
}

/// Seeded synthetic camera.
#[derive(Debug, Clone)]
pub struct Observer {
    config: ObserverConfig,
    rng: ChaCha8Rng,
}

impl Observer {
    pub fn new(config: ObserverConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, rng })
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.config
    }

    /// Markers with noise. The random stream advances by the same amount
    /// whatever the noise levels.
    pub fn sample_markers(&mut self, centerline: &Centerline, theta: &[f64], params: &RodParams) -> MarkerSet {
        let mut set = exact_markers(centerline, theta, params, self.config.n_markers);
        for (p, a) in set.positions.iter_mut().zip(set.angles.iter_mut()) {
            let ny: f64 = self.rng.sample(StandardNormal);
            let nz: f64 = self.rng.sample(StandardNormal);
            let na: f64 = self.rng.sample(StandardNormal);
            p[0] += self.config.position_noise_std * ny;
            p[1] += self.config.position_noise_std * nz;
            *a += self.config.angle_noise_std * na;
        }
        set
    }

    /// Full pipeline on the true angle field captured at `capture_time`.
    pub fn observe(&mut self, theta: &[f64], params: &RodParams, bank: &ActuatorBank, capture_time: f64) -> Result<Observation> {
        let line = reconstruct_centerline(theta, params)?;
        let markers = self.sample_markers(&line, theta, params);
        let theta_estimate = reconstruct_theta(&markers.arc_lengths, &markers.angles, params)?;
        let (fit, eps) = match shape_summary(&markers, self.config.window(), params, bank) {
            Ok(v) => v,
            Err(Error::TooFewPoints(_)) => (
                CircleFit {
                    center: [f64::INFINITY; 2],
                    radius: f64::INFINITY,
                    rms_residual: 0.0,
                    straight: true,
                },
                vec![0.0; bank.len()],
            ),
            Err(e) => return Err(e),
        };
        Ok(Observation {
            marker_positions: markers.positions,
            marker_angles: markers.angles,
            theta_estimate,
            curvature_estimate: vec![fit.curvature()],
            eps_estimates: eps,
            straight: fit.straight,
            capture_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    fn exact_contraction(theta: &[f64], p: &RodParams) -> Vec<f64> {
        let line = reconstruct_centerline(theta, p).unwrap();
        let markers = exact_markers(&line, theta, p, 10);
        shape_summary(&markers, (0, 10), p, &bank()).unwrap().1
    }

    fn bank() -> ActuatorBank {
        ActuatorBank::antagonistic_pair(0.015, PI / 4.0, 0.018, 50e3).unwrap()
    }

    fn circle_points(center: [f64; 2], r: f64, a0: f64, a1: f64, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|k| {
                let a = a0 + (a1 - a0) * k as f64 / (n - 1) as f64;
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            })
            .collect()
    }

    #[test]
    fn exact_circle_recovered() {
        let pts = circle_points([0.1, -0.2], 0.2, 0.0, 2.0 * PI * 7.0 / 8.0, 8);
        let fit = pratt_circle_fit(&pts, 0.3).unwrap();
        assert!((fit.radius - 0.2).abs() < 1e-9);
        assert!((fit.center[0] - 0.1).abs() < 1e-9);
        assert!((fit.center[1] + 0.2).abs() < 1e-9);
        assert!(!fit.straight);
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn three_points_give_circumcircle() {
        let pts = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        let fit = pratt_circle_fit(&pts, 1.0).unwrap();
        assert!((fit.radius - 1.0).abs() < 1e-12);
        assert!(fit.center[0].abs() < 1e-12 && fit.center[1].abs() < 1e-12);
    }

    #[test]
    fn collinear_points_are_straight() {
        let pts: Vec<[f64; 2]> = (0..10).map(|k| [0.0, 0.03 * k as f64]).collect();
        let fit = pratt_circle_fit(&pts, 0.3).unwrap();
        assert!(fit.straight);
        let eps = estimate_contraction(f64::INFINITY, &bank(), 1.0).unwrap();
        assert_eq!(eps, vec![0.0, 0.0]);
    }

    #[test]
    fn coincident_points_rejected() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        assert_eq!(pratt_circle_fit(&pts, 1.0), Err(Error::TooFewPoints(2)));
        assert_eq!(pratt_circle_fit(&pts[..2], 1.0), Err(Error::TooFewPoints(1)));
    }

    #[test]
    fn contraction_examples() {
        let b = bank();
        let eps = estimate_contraction(0.18, &b, 1.0).unwrap();
        assert!((eps[0] - 0.1).abs() < 1e-15);
        assert_eq!(eps[1], 0.0);
        let eps = estimate_contraction(0.18, &b, -1.0).unwrap();
        assert_eq!(eps[0], 0.0);
        assert!((eps[1] - 0.1).abs() < 1e-15);
        let eps = estimate_contraction(0.05, &b, 1.0).unwrap();
        assert!((eps[0] - (1.0 - (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!(matches!(estimate_contraction(0.0, &b, 1.0), Err(Error::NonPositiveRadius(_))));
        assert!(matches!(estimate_contraction(-1.0, &b, 1.0), Err(Error::NonPositiveRadius(_))));
    }

    #[test]
    fn zero_noise_markers_on_centerline() {
        let p = RodParams::default();
        let theta: Vec<f64> = p.arc_lengths().iter().map(|&s| 4.0 * s * s).collect();
        let line = reconstruct_centerline(&theta, &p).unwrap();
        let mut obs = Observer::new(ObserverConfig::default()).unwrap();
        let set = obs.sample_markers(&line, &theta, &p);
        assert_eq!(set.positions[0], [0.0, 0.0]);
        assert_eq!(set.positions[9], line.positions[100]);
        assert_eq!(set.angles[9], theta[100]);
        // every marker lies on the segment between its bracketing nodes
        let ds = p.spacing();
        for (s, q) in set.arc_lengths.iter().zip(&set.positions) {
            let i = ((s / ds).floor() as usize).min(99);
            let a = line.positions[i];
            let b = line.positions[i + 1];
            let cross = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
            assert!(cross.abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_markers() {
        let p = RodParams::default();
        let theta: Vec<f64> = p.arc_lengths().iter().map(|&s| 2.0 * s).collect();
        let line = reconstruct_centerline(&theta, &p).unwrap();
        let cfg = ObserverConfig {
            position_noise_std: 1e-3,
            angle_noise_std: 0.01,
            seed: 42,
            ..ObserverConfig::default()
        };
        let a = Observer::new(cfg.clone()).unwrap().sample_markers(&line, &theta, &p);
        let b = Observer::new(cfg).unwrap().sample_markers(&line, &theta, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn noise_level_matches_configuration() {
        let p = RodParams::default();
        let theta = vec![0.0; p.grid_size];
        let line = reconstruct_centerline(&theta, &p).unwrap();
        let cfg = ObserverConfig {
            n_markers: 10,
            position_noise_std: 1e-3,
            seed: 7,
            ..ObserverConfig::default()
        };
        let mut obs = Observer::new(cfg).unwrap();
        let exact = exact_markers(&line, &theta, &p, 10);
        let (mut sy, mut sz, mut count) = (0.0, 0.0, 0.0);
        for _ in 0..1000 {
            let set = obs.sample_markers(&line, &theta, &p);
            for (q, e) in set.positions.iter().zip(&exact.positions) {
                sy += (q[0] - e[0]).powi(2);
                sz += (q[1] - e[1]).powi(2);
                count += 1.0;
            }
        }
        assert_eq!(count, 1e4);
        let rms_y = (sy / count).sqrt();
        let rms_z = (sz / count).sqrt();
        assert!((rms_y / 1e-3 - 1.0).abs() < 0.05, "{rms_y}");
        assert!((rms_z / 1e-3 - 1.0).abs() < 0.05, "{rms_z}");
    }

    #[test]
    fn pchip_reproduces_linear_and_constant_fields() {
        let p = RodParams::default();
        let s = marker_arc_lengths(10, p.length);
        let lin: Vec<f64> = s.iter().map(|s| 2.5 * s).collect();
        let th = reconstruct_theta(&s, &lin, &p).unwrap();
        for (x, t) in p.arc_lengths().iter().zip(&th) {
            assert!((t - 2.5 * x).abs() <= 1e-12);
        }
        let th = reconstruct_theta(&s, &[0.7; 10], &p).unwrap();
        assert!(th.iter().all(|t| *t == 0.7));
    }

    #[test]
    fn pchip_keeps_bend_direction() {
        let p = RodParams::default();
        let s = marker_arc_lengths(10, p.length);
        let ang: Vec<f64> = s.iter().map(|s| 1.0 - (-8.0 * s).exp()).collect();
        let th = reconstruct_theta(&s, &ang, &p).unwrap();
        for w in th.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn dense_noise_free_pipeline_is_identity() {
        let p = RodParams::default();
        let theta: Vec<f64> = p.arc_lengths().iter().map(|&s| 1.5 * (5.0 * s).sin() + 3.0 * s * s).collect();
        let cfg = ObserverConfig {
            n_markers: 101,
            ..ObserverConfig::default()
        };
        let obs = Observer::new(cfg).unwrap().observe(&theta, &p, &bank(), 0.0).unwrap();
        let worst = obs.theta_estimate.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn arc_round_trip_recovers_contraction() {
        let p = RodParams::default();
        let b = bank();
        let eps_max = b.actuators()[0].eps_max();
        for r in [0.09, 0.18, 0.36] {
            let theta: Vec<f64> = p.arc_lengths().iter().map(|&s| s / r).collect();
            let obs = Observer::new(ObserverConfig::default()).unwrap().observe(&theta, &p, &b, 0.0).unwrap();
            let raw = 0.018 * obs.curvature_estimate[0];
            assert!((raw - 0.018 / r).abs() < 1e-3 * 0.018 / r, "{r} {raw}");
            assert_eq!(obs.eps_estimates[0], raw.min(eps_max));
            assert_eq!(obs.eps_estimates[1], 0.0);
        }
        let theta: Vec<f64> = p.arc_lengths().iter().map(|&s| -s / 0.05).collect();
        let obs = Observer::new(ObserverConfig::default()).unwrap().observe(&theta, &p, &b, 0.0).unwrap();
        assert_eq!(obs.eps_estimates[0], 0.0);
        assert_eq!(obs.eps_estimates[1], eps_max);
    }

    #[test]
    fn hanging_rod_is_straight() {
        let p = RodParams::default();
        let theta = vec![0.0; p.grid_size];
        let eps = exact_contraction(&theta, &p);
        assert_eq!(eps, vec![0.0, 0.0]);
        let theta = vec![-FRAC_PI_2; p.grid_size];
        let eps = exact_contraction(&theta, &p);
        assert_eq!(eps, vec![0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let bad = ObserverConfig {
            n_markers: 2,
            ..ObserverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { name: "observer.n_markers", .. })));
        let bad = ObserverConfig {
            angle_noise_std: -1.0,
            ..ObserverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ObserverConfig {
            fit_window: Some((5, 7)),
            ..ObserverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fit_is_rigid_motion_invariant(
                r in 0.05f64..1.0, a0 in 0.0f64..6.0, span in 0.8f64..3.0,
                rot in 0.0f64..6.3, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
            ) {
                let pts = circle_points([0.03, -0.1], r, a0, a0 + span, 10);
                // perturb off the circle so the fit is non-trivial
                let pts: Vec<[f64; 2]> = pts.iter().enumerate()
                    .map(|(k, p)| [p[0] + 1e-3 * ((k * 7 % 5) as f64 - 2.0), p[1] + 1e-3 * ((k * 3 % 4) as f64 - 1.5)])
                    .collect();
                let (s, c) = rot.sin_cos();
                let moved: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1] + ty, s * p[0] + c * p[1] + tz]).collect();
                let f0 = pratt_circle_fit(&pts, 1.0).unwrap();
                let f1 = pratt_circle_fit(&moved, 1.0).unwrap();
                prop_assert!((f0.radius - f1.radius).abs() <= 1e-10 * f0.radius.max(1.0));
                let cy = c * f0.center[0] - s * f0.center[1] + ty;
                let cz = s * f0.center[0] + c * f0.center[1] + tz;
                prop_assert!((cy - f1.center[0]).abs() <= 1e-10 && (cz - f1.center[1]).abs() <= 1e-10);
            }

            #[test]
            fn arc_curvature_round_trip(kappa in 0.5f64..12.0, sign in prop::bool::ANY) {
                let p = RodParams::default();
                let k = if sign { kappa } else { -kappa };
                let theta: Vec<f64> = p.arc_lengths().iter().map(|&s| k * s).collect();
                let eps = exact_contraction(&theta, &p);
                let (inner, outer) = if sign { (eps[0], eps[1]) } else { (eps[1], eps[0]) };
                let expect = (0.018 * kappa).min(1.0 - (2.0f64 / 3.0).sqrt());
                prop_assert!((inner - expect).abs() <= 1e-3 * expect);
                prop_assert_eq!(outer, 0.0);
            }
        }
    }
}
