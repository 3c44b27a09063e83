//! End-to-end runs of the `basis-voting` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use basis_voting::{gen_dgp, Scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_basis-voting"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

/// smooth_x draw written as `s1,s2,x,y[,z]`.
fn write_data(dir: &Path, covariate: bool) -> PathBuf {
    let draw = gen_dgp(&Scenario::SmoothX.config()).unwrap();
    let s = &draw.sample;
    let mut text = String::from(if covariate { "s1,s2,x,y,z\n" } else { "s1,s2,x,y\n" });
    for i in 0..s.len() {
        let p = s.locations()[i];
        text.push_str(&format!("{},{},{},{}", p.s1, p.s2, s.exposure()[i], s.outcome()[i]));
        if covariate {
            text.push_str(&format!(",{}", (i % 7) as f64));
        }
        text.push('\n');
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn simulate_writes_replicates_and_summary() {
    let dir = workdir("simulate");
    let config = write_config(
        &dir,
        r#"{"scenarios": ["smooth_x"], "bases": [{"family": "fourier-tensor", "d": 60}], "methods": ["voting-drop-one", "ols"]}"#,
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "simulate", "--config", config.to_str().unwrap(), "--replicates", "4", "--seed", "3", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(out_dir.join("replicates.csv")).unwrap();
    assert_eq!(rows.lines().next().unwrap(), "replicate,seed,scenario,basis,method,estimate,truth");
    assert_eq!(rows.lines().count(), 1 + 4 * 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let mean = summary["smooth_x/fourier-tensor-d60/voting-drop-one"]["mean"].as_f64().unwrap();
    assert!((mean - 2.5).abs() < 0.1);
    assert!(out_dir.join("config.json").exists());

    // Same seed, same bytes.
    let again = dir.join("again");
    let out = run(&[
        "simulate", "--config", config.to_str().unwrap(), "--replicates", "4", "--seed", "3", "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(rows, fs::read_to_string(again.join("replicates.csv")).unwrap());
}

#[test]
fn estimate_reports_mode_and_baselines() {
    let dir = workdir("estimate");
    let data = write_data(&dir, true);
    let config = write_config(&dir, r#"{"basis": {"family": "fourier-tensor", "d": 100}}"#);
    let out_dir = dir.join("out");
    let out = run(&["estimate", "--data", data.to_str().unwrap(), "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let beta = report["mode"]["beta_hat"].as_f64().unwrap();
    assert!((beta - 2.5).abs() < 0.1, "{beta}");
    assert!(report["baselines"]["ols"].as_f64().is_some());
    let density = fs::read_to_string(out_dir.join("density.csv")).unwrap();
    assert_eq!(density.lines().next().unwrap(), "x,density");
    let candidates = fs::read_to_string(out_dir.join("candidates.csv")).unwrap();
    assert_eq!(candidates.lines().next().unwrap(), "j,estimate,avar,alpha_x_hat");
}

#[test]
fn diagnose_and_sweep_write_curves() {
    let dir = workdir("diagnose");
    let data = write_data(&dir, false);
    let config = write_config(&dir, r#"{"basis": {"family": "fourier-tensor", "d": 60}, "d_values": [20, 40, 60]}"#);
    let diag = dir.join("diag");
    let out = run(&[
        "diagnose", "--data", data.to_str().unwrap(), "--field-a", "y", "--field-b", "x", "--config",
        config.to_str().unwrap(), "--out", diag.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(diag.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 4);

    let sweep = dir.join("sweep");
    let out = run(&[
        "sweep", "--data", data.to_str().unwrap(), "--config", config.to_str().unwrap(), "--d-values", "20..60:20",
        "--bandwidths", "0.01,0.1", "--out", sweep.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(sweep.join("sweep_d.csv")).unwrap().lines().count(), 4);
    assert_eq!(fs::read_to_string(sweep.join("sweep_bandwidth.csv")).unwrap().lines().count(), 3);
}

#[test]
fn errors_are_json_with_exit_codes() {
    let dir = workdir("errors");
    let config = write_config(&dir, r#"{"basis": {"family": "fourier-tensor", "d": 10}, "typo": 1}"#);
    let data = write_data(&dir, false);
    let out_dir = dir.join("out");

    let out = run(&["estimate", "--data", data.to_str().unwrap(), "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");

    let good = write_config(&dir, r#"{"basis": {"family": "fourier-tensor", "d": 10}}"#);
    let missing = dir.join("missing.csv");
    let out = run(&["estimate", "--data", missing.to_str().unwrap(), "--config", good.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_json(&out);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("missing.csv"));

    let bad = dir.join("bad.csv");
    fs::write(&bad, "s1,s2,x,y\n0.1,0.2,1.0,2.0\n0.3,0.4,oops,1.0\n").unwrap();
    let out = run(&["estimate", "--data", bad.to_str().unwrap(), "--config", good.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_json(&out);
    assert_eq!(e["error"], "parse");
    assert!(e["message"].as_str().unwrap().contains(":3"), "{e}");

    // A constant exposure has no basis support.
    let flat = dir.join("flat.csv");
    let mut text = String::from("s1,s2,x,y\n");
    for i in 0..25 {
        text.push_str(&format!("{},{},0,{}\n", (i / 5) as f64 / 5.0 + 0.1, (i % 5) as f64 / 5.0 + 0.1, i));
    }
    fs::write(&flat, text).unwrap();
    let out = run(&["estimate", "--data", flat.to_str().unwrap(), "--config", good.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["sweep", "--data", data.to_str().unwrap(), "--config", good.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_recovers_slope_without_noise_or_confounding() {
    let dir = workdir("noiseless");
    let mut text = String::from("s1,s2,x,y\n");
    for i in 0..30 {
        for k in 0..30 {
            let (s1, s2) = ((i as f64 + 0.5) / 30.0, (k as f64 + 0.5) / 30.0);
            let tau = 2.0 * std::f64::consts::PI;
            let x = 3.0 * (tau * s1).cos() - 4.0 * (2.0 * tau * s2).sin() + 5.0 * (tau * s1).sin() * (tau * s2).cos();
            text.push_str(&format!("{s1},{s2},{x},{}\n", 2.5 * x));
        }
    }
    let data = dir.join("data.csv");
    fs::write(&data, text).unwrap();
    let config = write_config(&dir, r#"{"basis": {"family": "fourier-tensor", "d": 40}}"#);
    let out_dir = dir.join("out");
    let out = run(&["estimate", "--data", data.to_str().unwrap(), "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let beta = report["mode"]["beta_hat"].as_f64().unwrap();
    assert!((beta - 2.5).abs() < 1e-8, "{beta}");
}
