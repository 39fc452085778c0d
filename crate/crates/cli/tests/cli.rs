use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cajun(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cajun"))
        .arg("--log-dir")
        .arg(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].as_str()).collect()
}

#[test]
fn rollout_writes_one_csv_and_one_summary() {
    let dir = TempDir::new().unwrap();
    let out = cajun(dir.path(), &["--seed", "3", "rollout"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["summary.json", "ticks_ep000.csv"]);

    let csv = fs::read_to_string(dir.path().join("ticks_ep000.csv")).unwrap();
    assert!(csv.starts_with("# seed=3 config_hash="));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    let ep = &summary["episodes"][0];
    assert_eq!(ep["termination"], "cycles_complete");
    assert_eq!(ep["cycles_completed"], 10);
    assert!(ep["term_means"]["upright"].as_f64().unwrap() > 0.9);
}

#[test]
fn replay_reproduces_the_trajectory_bitwise() {
    let first = TempDir::new().unwrap();
    assert!(cajun(first.path(), &["rollout"]).status.success());
    let log = first.path().join("ticks_ep000.csv");

    let second = TempDir::new().unwrap();
    let policy = format!("replay:{}", log.display());
    let out = cajun(second.path(), &["rollout", "--policy", &policy]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, a) = csv_rows(&log);
    let (_, b) = csv_rows(&second.path().join("ticks_ep000.csv"));
    assert_eq!(a, b);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[robot]\nmass = \"heavy\"\n").unwrap();
    let out = cajun(dir.path(), &["--config", cfg.to_str().unwrap(), "rollout"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("robot.mass"));

    let out = cajun(dir.path(), &["--config", "/nonexistent/cfg.toml", "validate-config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn valid_config_file_is_accepted() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 9\n[gait]\npreset = \"bounding\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cajun"))
        .args(["--config", cfg.to_str().unwrap(), "validate-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

#[test]
fn no_gait_pins_the_stepping_frequency() {
    let dir = TempDir::new().unwrap();
    let out = cajun(dir.path(), &["ablate", "--variant", "no_gait"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("no_gait/ticks_ep000.csv"));
    assert!(!rows.is_empty());
    assert!(column(&header, &rows, "f_step").iter().all(|&f| f == "1.66"));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("no_gait/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["variant"], "no_gait");
}

#[test]
fn no_swing_zeroes_the_residuals() {
    let dir = TempDir::new().unwrap();
    let out = cajun(dir.path(), &["ablate", "--variant", "no_swing"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("no_swing/ticks_ep000.csv"));
    for leg in ["fr", "fl", "rr", "rl"] {
        for axis in ["x", "y", "z"] {
            let col = column(&header, &rows, &format!("res_{leg}_{axis}"));
            assert!(col.iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
        }
    }
}

#[test]
fn remaining_ablations_run() {
    let dir = TempDir::new().unwrap();
    for variant in ["no_swing_ref", "qp"] {
        let out = cajun(dir.path(), &["ablate", "--variant", variant]);
        assert!(out.status.success(), "{variant}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(variant).join("summary.json").exists());
    }
}

#[test]
fn unknown_variant_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = cajun(dir.path(), &["ablate", "--variant", "no_legs"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_report() {
    let dir = TempDir::new().unwrap();
    let out = cajun(
        dir.path(),
        &["bench-grf", "--batch-sizes", "1,64", "--instances", "200", "--repeats", "1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bench_grf.json")).unwrap()).unwrap();
    let batches = report["batches"].as_array().unwrap();
    assert_eq!(batches.len(), 2);
    assert!(batches.iter().all(|b| b["speedup"].as_f64().unwrap() > 0.0));
    assert_eq!(report["qp_failures"], 0);
}

#[test]
fn payload_sweep_writes_csv() {
    let dir = TempDir::new().unwrap();
    let out = cajun(dir.path(), &["payload-sweep", "--payloads", "0,4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("payload_sweep.csv"));
    assert_eq!(rows.len(), 2);
    let hover: Vec<f64> = column(&header, &rows, "hover_force_per_leg_n")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    // Hover force scales with total mass.
    assert!((hover[1] / hover[0] - 16.0 / 12.0).abs() < 1e-3);
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(cajun(dir.path(), &["rollout", "--episodes", "many"]).status.code(), Some(2));
    assert_eq!(cajun(dir.path(), &["--gait", "galloping", "rollout"]).status.code(), Some(2));
}
