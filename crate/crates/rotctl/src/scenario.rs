//! Scenario files: TOML with `[rod]`, `[actuators]`, `[gains]`, `[observer]`,
//! `[sim]` and `[target]` sections. Every key is optional; unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rotctl_core::actuation::ActuatorBank;
use rotctl_core::control::{DesiredTrajectory, GainProfile};
use rotctl_core::observer::ObserverConfig;
use rotctl_core::qp::{GainMode, SolverSettings};
use rotctl_core::rod::{RodParams, RodState};
use rotctl_core::sim::{open_loop_equilibrium, ActuationMode, Scenario, SimConfig};
use rotctl_core::Error as CoreError;

/// Scenarios shipped with the binary, addressable by name.
pub const BUILTIN: &[(&str, &str)] = &[
    ("arc_replication_5kpa", include_str!("../scenarios/arc_replication_5kpa.toml")),
    ("arc_replication_10kpa", include_str!("../scenarios/arc_replication_10kpa.toml")),
    ("arc_replication_20kpa", include_str!("../scenarios/arc_replication_20kpa.toml")),
    ("arc_replication_30kpa", include_str!("../scenarios/arc_replication_30kpa.toml")),
    ("ideal_mode_theorem1", include_str!("../scenarios/ideal_mode_theorem1.toml")),
    ("gain_sweep", include_str!("../scenarios/gain_sweep.toml")),
    ("free_vibration", include_str!("../scenarios/free_vibration.toml")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.origin, line, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub rod: RodSection,
    pub actuators: ActuatorSection,
    pub gains: GainSection,
    pub observer: ObserverSection,
    pub sim: SimSection,
    pub target: TargetSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            rod: RodSection::default(),
            actuators: ActuatorSection::default(),
            gains: GainSection::default(),
            observer: ObserverSection::default(),
            sim: SimSection::default(),
            target: TargetSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RodSection {
    pub density: f64,
    pub youngs_modulus: f64,
    pub cross_section_area: f64,
    pub moment_of_area: f64,
    pub length: f64,
    pub grid_size: usize,
    pub base_angle: f64,
    pub gravity: f64,
    pub damping: f64,
}

impl Default for RodSection {
    fn default() -> Self {
        let p = RodParams::default();
        Self {
            density: p.density,
            youngs_modulus: p.youngs_modulus,
            cross_section_area: p.cross_section_area,
            moment_of_area: p.moment_of_area,
            length: p.length,
            grid_size: p.grid_size,
            base_angle: p.base_angle,
            gravity: p.gravity,
            damping: p.damping,
        }
    }
}

impl RodSection {
    pub fn params(&self) -> RodParams {
        RodParams {
            density: self.density,
            youngs_modulus: self.youngs_modulus,
            cross_section_area: self.cross_section_area,
            moment_of_area: self.moment_of_area,
            length: self.length,
            grid_size: self.grid_size,
            base_angle: self.base_angle,
            gravity: self.gravity,
            damping: self.damping,
        }
    }
}

/// An antagonistic pair: actuator 1 at `+moment_arm`, actuator 2 at
/// `−moment_arm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorSection {
    /// m
    pub initial_radius: f64,
    /// rad
    pub braid_angle: f64,
    /// m
    pub moment_arm: f64,
    /// Pa
    pub p_max: f64,
    /// Pa, held constant in open-loop runs only.
    pub pressures: Vec<f64>,
}

impl Default for ActuatorSection {
    fn default() -> Self {
        Self {
            initial_radius: 0.015,
            braid_angle: std::f64::consts::FRAC_PI_4,
            moment_arm: 0.018,
            p_max: 50.0e3,
            pressures: vec![0.0, 0.0],
        }
    }
}

impl ActuatorSection {
    pub fn bank(&self) -> Result<ActuatorBank, CoreError> {
        ActuatorBank::antagonistic_pair(self.initial_radius, self.braid_angle, self.moment_arm, self.p_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModeName {
    KOmegaFree,
    KOmegaAndKThetaFree,
}

impl From<GainModeName> for GainMode {
    fn from(m: GainModeName) -> Self {
        match m {
            GainModeName::KOmegaFree => GainMode::KOmegaFree,
            GainModeName::KOmegaAndKThetaFree => GainMode::KOmegaAndKThetaFree,
        }
    }
}

/// Uniform gain fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSection {
    pub k_theta: f64,
    pub k_omega: f64,
    pub k_bar: f64,
    /// Defaults to `k_theta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_theta_bar: Option<f64>,
    pub mode: GainModeName,
}

impl Default for GainSection {
    fn default() -> Self {
        Self {
            k_theta: GainProfile::DEFAULT_K_THETA,
            k_omega: GainProfile::DEFAULT_K_OMEGA,
            k_bar: GainProfile::DEFAULT_K_BAR,
            k_theta_bar: None,
            mode: GainModeName::KOmegaFree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverSection {
    pub n_markers: usize,
    /// m
    pub position_noise_std: f64,
    /// rad
    pub angle_noise_std: f64,
    /// Hz
    pub frame_rate: f64,
    /// s
    pub latency: f64,
    pub seed: u64,
    /// Half-open marker range `[first, last)` used for the circle fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[usize; 2]>,
}

impl Default for ObserverSection {
    fn default() -> Self {
        let c = ObserverConfig::default();
        Self {
            n_markers: c.n_markers,
            position_noise_std: c.position_noise_std,
            angle_noise_std: c.angle_noise_std,
            frame_rate: c.frame_rate,
            latency: c.latency,
            seed: c.seed,
            fit_window: None,
        }
    }
}

impl ObserverSection {
    pub fn config(&self) -> ObserverConfig {
        ObserverConfig {
            n_markers: self.n_markers,
            position_noise_std: self.position_noise_std,
            angle_noise_std: self.angle_noise_std,
            frame_rate: self.frame_rate,
            latency: self.latency,
            seed: self.seed,
            fit_window: self.fit_window.map(|[a, b]| (a, b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationModeName {
    IdealLStar,
    QpPressures,
    OpenLoop,
}

impl From<ActuationModeName> for ActuationMode {
    fn from(m: ActuationModeName) -> Self {
        match m {
            ActuationModeName::IdealLStar => ActuationMode::IdealLStar,
            ActuationModeName::QpPressures => ActuationMode::QpPressures,
            ActuationModeName::OpenLoop => ActuationMode::OpenLoop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// s; half the CFL limit when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    pub control_period: f64,
    /// `inf` disables stopping.
    pub stop_tol: f64,
    pub settle_time: f64,
    pub actuation_mode: ActuationModeName,
    pub record_period: f64,
    pub estimate_velocity: bool,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// rad; amplitude of the first clamped-free mode `sin(πs/2L)` added to the
    /// straight initial shape.
    pub initial_mode_amplitude: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            dt: c.dt,
            t_end: c.t_end,
            control_period: c.control_period,
            stop_tol: c.stop_tol,
            settle_time: c.settle_time,
            actuation_mode: ActuationModeName::QpPressures,
            record_period: c.record_period,
            estimate_velocity: c.estimate_velocity,
            solver_tol: c.solver.tol,
            solver_max_iter: c.solver.max_iter,
            initial_mode_amplitude: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Straight,
    Arc,
    Equilibrium,
    Homotopy,
}

/// `arc` uses `curvature`; `equilibrium` uses `pressures`; `homotopy` blends
/// the arc of `from_curvature` into the arc of `curvature` over
/// `[start, start + duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub kind: TargetKind,
    /// 1/m
    pub curvature: f64,
    /// Pa, one per actuator.
    pub pressures: Vec<f64>,
    pub from_curvature: f64,
    pub start: f64,
    pub duration: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            kind: TargetKind::Straight,
            curvature: 0.0,
            pressures: vec![0.0, 0.0],
            from_curvature: 0.0,
            start: 0.0,
            duration: 1.0,
        }
    }
}

impl ScenarioFile {
    pub fn parse(src: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| toml_error(&e, src, origin))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Applies `section.key=value` overrides. Values are TOML literals; bare
    /// words are taken as strings, and `key[i]` addresses an array element.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("dump reparses");
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let src = toml::to_string(&table).expect("table serializes");
        toml::from_str(&src).map_err(|e| ConfigError {
            origin: "--override".into(),
            line: None,
            message: e.message().to_string(),
        })
    }

    /// Builds and validates the core scenario.
    pub fn build(&self) -> Result<Scenario, CoreError> {
        let rod = self.rod.params();
        rod.validate()?;
        let mut bank = self.actuators.bank()?;
        if self.sim.actuation_mode == ActuationModeName::OpenLoop {
            bank.set_pressures(&self.actuators.pressures)?;
        }
        let n = rod.grid_size;
        let mut gains = GainProfile::uniform(n, self.gains.k_theta, self.gains.k_omega);
        gains.k_bar = self.gains.k_bar;
        gains.k_theta_bar = self.gains.k_theta_bar.unwrap_or(self.gains.k_theta);

        let arc = |k: f64| -> Vec<f64> { rod.arc_lengths().iter().map(|&s| k * s + rod.base_angle).collect() };
        let target = match self.target.kind {
            TargetKind::Straight => DesiredTrajectory::arc(&rod, 0.0),
            TargetKind::Arc => DesiredTrajectory::arc(&rod, self.target.curvature),
            TargetKind::Equilibrium => DesiredTrajectory::snapshot(open_loop_equilibrium(&rod, &bank, &self.target.pressures)?),
            TargetKind::Homotopy => DesiredTrajectory::homotopy(
                arc(self.target.from_curvature),
                arc(self.target.curvature),
                self.target.start,
                self.target.duration,
            )?,
        };

        let sim = SimConfig {
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            control_period: self.sim.control_period,
            stop_tol: self.sim.stop_tol,
            settle_time: self.sim.settle_time,
            actuation_mode: self.sim.actuation_mode.into(),
            record_period: self.sim.record_period,
            gain_mode: self.gains.mode.into(),
            estimate_velocity: self.sim.estimate_velocity,
            solver: SolverSettings {
                tol: self.sim.solver_tol,
                max_iter: self.sim.solver_max_iter,
            },
        };

        let amplitude = self.sim.initial_mode_amplitude;
        if !amplitude.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "sim.initial_mode_amplitude",
                value: amplitude,
                reason: "must be finite",
            });
        }
        let initial_state = (amplitude != 0.0).then(|| {
            let theta = rod
                .arc_lengths()
                .iter()
                .map(|&s| rod.base_angle + amplitude * (std::f64::consts::PI * s / (2.0 * rod.length)).sin())
                .collect();
            RodState::at_rest(theta)
        });

        let scenario = Scenario {
            rod,
            bank,
            target,
            gains,
            observer: self.observer.config(),
            sim,
            initial_state,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError {
        origin: "--override".into(),
        line: None,
        message,
    };
    let (path, raw) = ov
        .split_once('=')
        .ok_or_else(|| err(format!("`{ov}` is not of the form section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| err(format!("`{path}` is not of the form section.key")))?;
    let (key, index) = match key.split_once('[') {
        Some((k, rest)) => {
            let i = rest
                .strip_suffix(']')
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| err(format!("bad index in `{path}`")))?;
            (k, Some(i))
        }
        None => (key, None),
    };
    let value = parse_value(raw.trim());
    let sec = table
        .get_mut(section)
        .and_then(|v| v.as_table_mut())
        .ok_or_else(|| err(format!("unknown section [{section}]")))?;
    match index {
        None => {
            sec.insert(key.to_string(), value);
        }
        Some(i) => {
            let arr = sec
                .get_mut(key)
                .and_then(|v| v.as_array_mut())
                .ok_or_else(|| err(format!("[{section}].{key} is not an array")))?;
            let slot = arr
                .get_mut(i)
                .ok_or_else(|| err(format!("[{section}].{key}[{i}] is out of range")))?;
            *slot = value;
        }
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn toml_error(e: &toml::de::Error, src: &str, origin: &str) -> ConfigError {
    let line = e.span().map(|span| src[..span.start.min(src.len())].matches('\n').count() + 1);
    ConfigError {
        origin: origin.into(),
        line,
        message: e.message().to_string(),
    }
}

/// 1-based line of `key` inside `[section]`, if it is written in `src`.
pub fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Turns a core validation error into a message naming the scenario key, with
/// its line when the key appears in the source.
pub fn validation_error(e: &CoreError, src: Option<&str>, origin: &str) -> ConfigError {
    let name = match e {
        CoreError::InvalidParameter { name, .. } => Some(*name),
        CoreError::DimensionMismatch { field, .. } | CoreError::NonFinite { field, .. } => Some(*field),
        CoreError::PressureOutOfBounds { .. } | CoreError::NegativePressure(_) => Some("actuators.pressures"),
        _ => None,
    };
    let mut line = None;
    let mut message = e.to_string();
    if let Some((section, key)) = name.and_then(|n| n.split_once('.')) {
        let key = key.split(['.', '[']).next().unwrap_or(key);
        line = src.and_then(|s| locate(s, section, key));
        message = format!("[{section}].{key}: {message}");
    }
    ConfigError {
        origin: origin.into(),
        line,
        message,
    }
}

/// A scenario ready to run, with the text it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub name: String,
    pub file: ScenarioFile,
    pub scenario: Scenario,
}

/// Loads a bundled scenario by name or a TOML file by path, applies
/// overrides and an optional seed, and validates.
pub fn load(spec: &str, overrides: &[String], seed: Option<u64>) -> Result<Loaded, ConfigError> {
    let (name, src, origin) = match builtin(spec) {
        Some(src) => (spec.to_string(), src.to_string(), format!("<builtin {spec}>")),
        None => {
            let path = Path::new(spec);
            let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
                origin: spec.into(),
                line: None,
                message: format!("cannot read scenario: {e}"),
            })?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
            (name, src, spec.to_string())
        }
    };
    let mut file = ScenarioFile::parse(&src, &origin)?;
    file = file.with_overrides(overrides)?;
    if let Some(seed) = seed {
        file.observer.seed = seed;
    }
    let scenario = file.build().map_err(|e| validation_error(&e, Some(&src), &origin))?;
    Ok(Loaded { name, file, scenario })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_build() {
        for (name, src) in BUILTIN {
            let file = ScenarioFile::parse(src, name).unwrap();
            file.build().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn dump_round_trips() {
        for (name, src) in BUILTIN {
            let file = ScenarioFile::parse(src, name).unwrap();
            let again = ScenarioFile::parse(&file.to_toml(), "dump").unwrap();
            assert_eq!(file, again, "{name}");
            assert_eq!(file.build().unwrap(), again.build().unwrap());
        }
    }

    #[test]
    fn unknown_key_has_line() {
        let src = "[rod]\ndensity = 1000.0\ncolour = 3\n";
        let e = ScenarioFile::parse(src, "x.toml").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("colour"), "{}", e.message);
    }

    #[test]
    fn negative_density_names_key_and_line() {
        let src = "[sim]\nt_end = 1.0\n\n[rod]\ngrid_size = 51\ndensity = -5.0\n";
        let file = ScenarioFile::parse(src, "x.toml").unwrap();
        let e = validation_error(&file.build().unwrap_err(), Some(src), "x.toml");
        assert_eq!(e.line, Some(6));
        assert!(e.to_string().starts_with("x.toml:6: [rod].density"), "{e}");
    }

    #[test]
    fn overrides() {
        let file = ScenarioFile::default();
        let o = file
            .with_overrides(&[
                "sim.stop_tol=0.2".into(),
                "sim.actuation_mode=ideal_l_star".into(),
                "target.pressures[1]=7000".into(),
                "sim.t_end = 3".into(),
            ])
            .unwrap();
        assert_eq!(o.sim.stop_tol, 0.2);
        assert_eq!(o.sim.actuation_mode, ActuationModeName::IdealLStar);
        assert_eq!(o.target.pressures, vec![0.0, 7000.0]);
        assert_eq!(o.sim.t_end, 3.0);
        assert!(file.with_overrides(&["nosection=1".into()]).is_err());
        assert!(file.with_overrides(&["rod.colour=1".into()]).is_err());
        assert!(file.with_overrides(&["target.pressures[5]=1".into()]).is_err());
    }

    #[test]
    fn infinite_stop_tol_round_trips() {
        let file = ScenarioFile::parse("[sim]\nstop_tol = inf\n", "x").unwrap();
        assert!(file.sim.stop_tol.is_infinite());
        assert_eq!(ScenarioFile::parse(&file.to_toml(), "d").unwrap(), file);
    }
}
