use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rotctl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rotctl"));
    cmd.env_remove("ROTCTL_OUT_DIR");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn rotctl")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl().args(["simulate", "arc_replication_10kpa", "-o"]).arg(tmp.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["timeseries.csv", "final_shape.csv", "summary.json"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    let s = summary(tmp.path());
    assert_eq!(s["status"], "converged");
    assert!(s["convergence_time_s"].as_f64().is_some());

    let ts = fs::read_to_string(tmp.path().join("timeseries.csv")).unwrap();
    assert_eq!(ts.lines().next().unwrap(), "t_s,err_norm_rad,p1_pa,p2_pa,qp_residual,energy_j,status");
    let shape = fs::read_to_string(tmp.path().join("final_shape.csv")).unwrap();
    assert_eq!(shape.lines().next().unwrap(), "s_m,y_m,z_m,theta_rad");
    assert_eq!(shape.lines().count(), 102);
}

#[test]
fn override_reaches_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl()
        .args(["simulate", "ideal_mode_theorem1", "--override", "sim.stop_tol=0.5", "-o"])
        .arg(tmp.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(summary(tmp.path())["stop_tol"].as_f64(), Some(0.5));
}

#[test]
fn out_dir_env_is_default() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl()
        .args(["simulate", "ideal_mode_theorem1"])
        .env("ROTCTL_OUT_DIR", tmp.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("summary.json").is_file());
}

#[test]
fn negative_density_is_config_error_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[rod]\ndensity = -1.0\n").unwrap();
    let out = run(rotctl().arg("simulate").arg(&path).arg("-o").arg(tmp.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("[rod].density"), "{msg}");
    assert!(msg.contains("bad.toml:2"), "{msg}");
}

#[test]
fn unknown_key_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("typo.toml");
    fs::write(&path, "[sim]\nt_ned = 3.0\n").unwrap();
    let out = run(rotctl().arg("simulate").arg(&path).arg("-o").arg(tmp.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("typo.toml:2"), "{}", stderr(&out));
}

#[test]
fn cfl_violation_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl()
        .args(["simulate", "free_vibration", "--override", "sim.dt=1e-3", "-o"])
        .arg(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("[sim].dt"), "{}", stderr(&out));
}

#[test]
fn dump_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let first = run(rotctl().args(["simulate", "arc_replication_20kpa", "--dump-config", "--override", "gains.k_theta=123.5"]));
    assert!(first.status.success(), "{}", stderr(&first));
    let path = tmp.path().join("dumped.toml");
    fs::write(&path, &first.stdout).unwrap();
    let second = run(rotctl().arg("simulate").arg(&path).arg("--dump-config"));
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(first.stdout, second.stdout);
    assert!(String::from_utf8_lossy(&first.stdout).contains("123.5"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = run(rotctl().args(["simulate", "arc_replication_5kpa", "--seed", "3", "-o"]).arg(dir));
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["timeseries.csv", "final_shape.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dump_qp_writes_one_line_per_tick() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl()
        .args(["simulate", "arc_replication_10kpa", "--dump-qp", "--override", "sim.t_end=0.2", "-o"])
        .arg(tmp.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let ticks = fs::read_to_string(tmp.path().join("qp_ticks.jsonl")).unwrap();
    let n = summary(tmp.path())["control_ticks"].as_u64().unwrap() as usize;
    assert!(n > 0);
    assert_eq!(ticks.lines().count(), n);
    for line in ticks.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}

#[test]
fn sweep_runs_every_value_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl()
        .args([
            "sweep",
            "arc_replication_10kpa",
            "--param",
            "target.pressures[0]",
            "--values",
            "10e3,20e3,30e3",
            "--seeds",
            "5",
            "--override",
            "sim.t_end=1.0",
            "-o",
        ])
        .arg(tmp.path()));
    assert!(matches!(out.status.code(), Some(0) | Some(4)), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 12);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    let mut seen: Vec<(String, String)> = rows.iter().map(|r| (r[2].to_string(), r[3].to_string())).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 15);
    for i in 0..15 {
        assert!(tmp.path().join(format!("run_{i:03}")).join("summary.json").is_file());
    }
}

#[test]
fn sweep_without_values_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(rotctl()
        .args(["sweep", "gain_sweep", "--param", "gains.k_theta", "--values", "", "-o"])
        .arg(tmp.path()));
    assert_ne!(out.status.code(), Some(0));
}

fn write_points(dir: &Path, pts: &[[f64; 2]]) -> std::path::PathBuf {
    let path = dir.join("points.csv");
    let mut s = String::from("y,z\n");
    for p in pts {
        s.push_str(&format!("{:.17e},{:.17e}\n", p[0], p[1]));
    }
    fs::write(&path, s).unwrap();
    path
}

fn fit(path: &Path) -> (Output, Option<Value>) {
    let out = run(rotctl().arg("fit-circle").arg(path));
    let v = serde_json::from_slice(&out.stdout).ok();
    (out, v)
}

#[test]
fn fit_circle_exact_arc() {
    let tmp = tempfile::tempdir().unwrap();
    let r = 0.2;
    let pts: Vec<[f64; 2]> = (0..12)
        .map(|k| {
            let phi = 1.2 * k as f64 / 11.0;
            [r * phi.sin(), r * (1.0 - phi.cos())]
        })
        .collect();
    let (out, v) = fit(&write_points(tmp.path(), &pts));
    assert!(out.status.success(), "{}", stderr(&out));
    let v = v.unwrap();
    assert!((v["radius"].as_f64().unwrap() - r).abs() < 1e-9);
    assert_eq!(v["straight"], false);
    assert_eq!(v["eps"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_circle_collinear_is_straight() {
    let tmp = tempfile::tempdir().unwrap();
    let pts: Vec<[f64; 2]> = (0..8).map(|k| [0.03 * k as f64, 0.0]).collect();
    let (out, v) = fit(&write_points(tmp.path(), &pts));
    assert!(out.status.success(), "{}", stderr(&out));
    let v = v.unwrap();
    assert_eq!(v["straight"], true);
    assert!(v["radius"].is_null());
    for e in v["eps"].as_array().unwrap() {
        assert_eq!(e.as_f64(), Some(0.0));
    }
}

#[test]
fn fit_circle_needs_three_points() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, _) = fit(&write_points(tmp.path(), &[[0.0, 0.0], [0.1, 0.0]]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenarios_lists_builtins() {
    let out = run(rotctl().arg("scenarios"));
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    for n in ["arc_replication_10kpa", "ideal_mode_theorem1", "gain_sweep", "free_vibration"] {
        assert!(names.lines().any(|l| l == n), "{n}");
    }
}
