use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde_json::{json, Value};

use rotctl_core::observer::{estimate_contraction, pratt_circle_fit};
use rotctl_core::sim::{run_with_hook, SimResult, SimStatus, TickOutput};

use crate::output::{self, num, qp_status_name, sim_status_name};
use crate::scenario::{self, ActuatorSection, ConfigError, Loaded, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

pub const OUT_DIR_ENV: &str = "ROTCTL_OUT_DIR";

/// `--out`, then `$ROTCTL_OUT_DIR`, then `./rotctl_out`.
pub fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rotctl_out"))
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOpts {
    pub scenario: String,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub dump_config: bool,
    pub dump_qp: bool,
    pub verbose: bool,
    pub realtime: bool,
}

pub fn simulate(opts: &SimulateOpts) -> i32 {
    let loaded = match scenario::load(&opts.scenario, &opts.overrides, opts.seed) {
        Ok(l) => l,
        Err(e) => return config_error(&e),
    };
    if opts.dump_config {
        print!("{}", loaded.file.to_toml());
        return EXIT_OK;
    }
    let dir = out_dir(opts.out.clone());
    match simulate_into(&loaded, &dir, opts) {
        Ok(result) => {
            if opts.verbose {
                eprintln!(
                    "{}: {} after {} samples, outputs in {}",
                    loaded.name,
                    sim_status_name(&result.status),
                    result.samples.len(),
                    dir.display()
                );
            }
            match result.status {
                SimStatus::NumericalFailure { node, time } => {
                    eprintln!("error: state became non-finite at node {node}, t = {time} s");
                    EXIT_NUMERICAL
                }
                _ => EXIT_OK,
            }
        }
        Err(RunError::Config(e)) => config_error(&e),
        Err(RunError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}

fn config_error(e: &ConfigError) -> i32 {
    eprintln!("error: {e}");
    EXIT_CONFIG
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(std::io::Error),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Runs a loaded scenario and writes `timeseries.csv`, `summary.json` and
/// `final_shape.csv` (plus `qp_ticks.jsonl` with `dump_qp`) into `dir`.
pub fn simulate_into(loaded: &Loaded, dir: &Path, opts: &SimulateOpts) -> Result<SimResult, RunError> {
    fs::create_dir_all(dir)?;
    let mut qp_dump = if opts.dump_qp {
        Some(BufWriter::new(File::create(dir.join("qp_ticks.jsonl"))?))
    } else {
        None
    };
    let mut dump_err: Option<std::io::Error> = None;
    let wall = Instant::now();
    let result = run_with_hook(&loaded.scenario, |t, tick| {
        if opts.verbose {
            eprintln!(
                "t = {t:.3} s  P = {:?} Pa  eps = {:?}  residual = {:.3e}  {} ({} it)",
                tick.solution.pressures,
                tick.observation.eps_estimates,
                tick.solution.residual,
                qp_status_name(Some(tick.solution.status)),
                tick.solution.iterations
            );
        }
        if let Some(w) = qp_dump.as_mut() {
            if let Err(e) = writeln!(w, "{}", tick_json(t, tick)) {
                dump_err.get_or_insert(e);
            }
        }
        if opts.realtime {
            let ahead = Duration::from_secs_f64(t).saturating_sub(wall.elapsed());
            std::thread::sleep(ahead);
        }
    })
    .map_err(|e| RunError::Config(scenario::validation_error(&e, None, &loaded.name)))?;
    if let Some(e) = dump_err {
        return Err(e.into());
    }
    if let Some(mut w) = qp_dump {
        w.flush()?;
    }

    let mut ts = BufWriter::new(File::create(dir.join("timeseries.csv"))?);
    output::write_timeseries(&mut ts, &result)?;
    ts.flush()?;
    let mut shape = BufWriter::new(File::create(dir.join("final_shape.csv"))?);
    output::write_final_shape(&mut shape, &loaded.scenario, &result)?;
    shape.flush()?;
    let summary = output::summary(&loaded.name, &loaded.scenario, &result);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    Ok(result)
}

fn tick_json(t: f64, tick: &TickOutput) -> Value {
    let p = &tick.problem;
    let rows: Vec<Vec<f64>> = p.pressure_matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
    let s = &tick.solution;
    json!({
        "t": t,
        "capture_time": tick.observation.capture_time,
        "problem": {
            "pressure_matrix": rows,
            "inertia": p.inertia,
            "rhs_fixed": p.rhs_fixed,
            "e_theta": p.e_theta,
            "e_omega": p.e_omega,
            "accel_star": p.accel_star,
            "k_theta": p.k_theta,
            "p_max": p.p_max,
            "k_bar": p.k_bar,
            "k_theta_bar": p.k_theta_bar,
            "weights": p.weights,
        },
        "solution": {
            "pressures": s.pressures,
            "k_omega": s.k_omega,
            "k_theta": s.k_theta,
            "residual": s.residual,
            "iterations": s.iterations,
            "status": qp_status_name(Some(s.status)),
        },
        "eps_estimates": tick.observation.eps_estimates,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SweepOpts {
    pub scenario: String,
    pub parameter: String,
    pub values: Vec<f64>,
    pub seeds: usize,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
}

pub const SWEEP_HEADER: [&str; 12] = [
    "run",
    "parameter",
    "value",
    "seed",
    "status",
    "convergence_time_s",
    "overshoot_rad",
    "decay_rate_per_s",
    "r_squared",
    "final_err_norm_rad",
    "p1_pa",
    "p2_pa",
];

/// TOML literal for a sweep value; integral values stay integers so that
/// count fields such as `rod.grid_size` accept them.
fn literal(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

pub fn sweep(opts: &SweepOpts) -> i32 {
    if opts.values.is_empty() {
        eprintln!("error: --values is empty");
        return EXIT_CONFIG;
    }
    if opts.seeds == 0 {
        eprintln!("error: --seeds must be at least 1");
        return EXIT_CONFIG;
    }
    let base_seed = match opts.seed {
        Some(s) => s,
        None => match scenario::load(&opts.scenario, &opts.overrides, None) {
            Ok(l) => l.file.observer.seed,
            Err(e) => return config_error(&e),
        },
    };

    let mut runs = Vec::new();
    for &value in &opts.values {
        for k in 0..opts.seeds {
            let mut overrides = opts.overrides.clone();
            overrides.push(format!("{}={}", opts.parameter, literal(value)));
            let seed = base_seed + k as u64;
            match scenario::load(&opts.scenario, &overrides, Some(seed)) {
                Ok(l) => runs.push((value, seed, l)),
                Err(e) => return config_error(&e),
            }
        }
    }

    let dir = out_dir(opts.out.clone());
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(opts.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
    };
    let sim_opts = SimulateOpts::default();
    let outcomes: Vec<Result<SimResult, String>> = pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(i, (_, _, loaded))| {
                simulate_into(loaded, &dir.join(format!("run_{i:03}")), &sim_opts).map_err(|e| match e {
                    RunError::Config(c) => c.to_string(),
                    RunError::Io(io) => io.to_string(),
                })
            })
            .collect()
    });

    let mut failures = 0;
    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(SWEEP_HEADER).expect("in-memory write");
    for (i, ((value, seed, loaded), outcome)) in runs.iter().zip(&outcomes).enumerate() {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let row = match outcome {
            Ok(r) => {
                if matches!(r.status, SimStatus::NumericalFailure { .. }) {
                    failures += 1;
                }
                let m = r.metrics(&loaded.scenario.sim).ok();
                let last = r.samples.last();
                let p = |j: usize| opt(last.and_then(|s| s.pressures.get(j).copied()));
                [
                    i.to_string(),
                    opts.parameter.clone(),
                    num(*value),
                    seed.to_string(),
                    sim_status_name(&r.status).to_string(),
                    opt(r.convergence_time),
                    opt(m.map(|m| m.overshoot)),
                    opt(m.and_then(|m| m.decay_rate)),
                    opt(m.and_then(|m| m.r_squared)),
                    opt(last.map(|s| s.err_norm)),
                    p(0),
                    p(1),
                ]
            }
            Err(msg) => {
                failures += 1;
                eprintln!("run {i}: {msg}");
                let mut row: [String; 12] = Default::default();
                row[0] = i.to_string();
                row[1] = opts.parameter.clone();
                row[2] = num(*value);
                row[3] = seed.to_string();
                row[4] = "error".into();
                row
            }
        };
        table.write_record(&row).expect("in-memory write");
    }
    let bytes = table.into_inner().expect("in-memory flush");
    if let Err(e) = fs::write(dir.join("sweep.csv"), bytes) {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    if failures > 0 {
        eprintln!("{failures} of {} runs failed", runs.len());
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitCircleOpts {
    pub points: PathBuf,
    /// Scenario whose `[actuators]` section supplies moment arms; defaults
    /// otherwise.
    pub scenario: Option<String>,
}

/// Reads `(y, z)` rows; a non-numeric first row is taken as a header.
pub fn read_points(path: &Path) -> Result<Vec<[f64; 2]>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parsed: Result<Vec<f64>, _> = rec.iter().take(2).map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == 2 => points.push([v[0], v[1]]),
            _ if i == 0 => continue,
            _ => return Err(format!("line {}: expected two numbers", i + 1)),
        }
    }
    Ok(points)
}

/// Turning direction of the polyline: +1 when its tangent rotates towards
/// increasing θ.
fn turning_sign(points: &[[f64; 2]]) -> f64 {
    let cross: f64 = points
        .windows(3)
        .map(|w| {
            let a = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let b = [w[2][0] - w[1][0], w[2][1] - w[1][1]];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    if cross > 0.0 {
        1.0
    } else if cross < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn fit_circle_json(points: &[[f64; 2]], actuators: &ActuatorSection) -> Result<Value, String> {
    let length: f64 = points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum();
    let fit = pratt_circle_fit(points, length).map_err(|e| e.to_string())?;
    let bank = actuators.bank().map_err(|e| e.to_string())?;
    let radius = if fit.straight { f64::INFINITY } else { fit.radius };
    let sign = turning_sign(points);
    let eps = estimate_contraction(radius, &bank, sign).map_err(|e| e.to_string())?;
    Ok(json!({
        "center": if fit.straight { Value::Null } else { json!(fit.center) },
        "radius": if fit.straight { Value::Null } else { json!(fit.radius) },
        "curvature": fit.curvature(),
        "straight": fit.straight,
        "rms_residual": fit.rms_residual,
        "bend_sign": sign,
        "eps": eps,
        "points": points.len(),
    }))
}

pub fn fit_circle(opts: &FitCircleOpts) -> i32 {
    let actuators = match &opts.scenario {
        Some(s) => match scenario::load(s, &[], None) {
            Ok(l) => l.file.actuators,
            Err(e) => return config_error(&e),
        },
        None => ScenarioFile::default().actuators,
    };
    let points = match read_points(&opts.points) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", opts.points.display());
            return EXIT_CONFIG;
        }
    };
    if points.len() < 3 {
        eprintln!("error: need at least 3 points, got {}", points.len());
        return EXIT_CONFIG;
    }
    match fit_circle_json(&points, &actuators) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
