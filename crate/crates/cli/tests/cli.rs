use std::path::Path;
use std::process::{Command, Output};

fn twoweight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoweight")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn constants_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"level": 4}"#);
    let out = twoweight(&["constants", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["experiment"], "constants");
}

#[test]
fn output_file_and_summary_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.json", r#"{"level": 5, "instances": 3}"#);
    let out_path = dir.path().join("rows.csv");
    let out = twoweight(&["equivalence", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("instance,model,"));
    assert_eq!(csv.lines().count(), 4);
    let summary = std::fs::read_to_string(dir.path().join("rows.csv.summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["instances"], 3);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", r#"{"level": 6, "instances": 2, "seed": 5}"#);
    let a = twoweight(&["decompose", "--config", &cfg, "--exact"]);
    let b = twoweight(&["decompose", "--config", &cfg, "--exact"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = twoweight(&["decompose", "--config", &cfg, "--exact", "--seed", "6"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn configured_output_path_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let cfg = write(dir.path(), "f.json", &format!(r#"{{"level": 4, "output": {:?}}}"#, target.display().to_string()));
    let out = twoweight(&["fractional", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!(target.exists());
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"p": 0.5}"#);
    assert_eq!(twoweight(&["constants", "--config", &bad]).status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.json", r#"{"colour": "red"}"#);
    assert_eq!(twoweight(&["constants", "--config", &unknown]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(twoweight(&["constants", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let other = write(dir.path(), "other.json", r#"{"experiment": "poisson"}"#);
    let out = twoweight(&["constants", "--config", &other]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn size_guard_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "big.json", r#"{"dimension": 2, "level": 12}"#);
    assert_eq!(twoweight(&["constants", "--config", &cfg]).status.code(), Some(4));
}

#[test]
fn below_threshold_decomposition_is_not_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "low.json", r#"{"level": 6, "D": 1.01, "instances": 2}"#);
    assert_eq!(twoweight(&["decompose", "--config", &cfg]).status.code(), Some(0));
}
