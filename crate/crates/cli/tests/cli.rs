use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn phaseret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseret"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = path(dir, name);
    std::fs::write(&p, text).unwrap();
    p
}

const WORKED: &str = r#"{"n": 16, "entries": [[0, 2.0], [1, -1.0], [6, 3.0], [9, 1.0]]}"#;

#[test]
fn combinatorial_round_trip() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.json", WORKED);
    let a = path(&dir, "a.json");
    let y = path(&dir, "y.json");
    assert!(phaseret(&["autocorr", "--in", s(&x), "--out", s(&a)]).status.success());
    let out = phaseret(&["recover", "--algo", "comb", "--in", s(&a), "--out", s(&y)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let check = phaseret(&["check-equal", "--a", s(&x), "--b", s(&y), "--tol", "1e-9"]);
    assert_eq!(check.status.code(), Some(0));
}

#[test]
fn sdp_round_trip() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.json", WORKED);
    let a = path(&dir, "a.json");
    let y = path(&dir, "y.json");
    assert!(phaseret(&["autocorr", "--in", s(&x), "--out", s(&a)]).status.success());
    let out = phaseret(&["recover", "--algo", "sdp", "--k", "4", "--in", s(&a), "--out", s(&y)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let check = phaseret(&["check-equal", "--a", s(&x), "--b", s(&y), "--tol", "1e-6"]);
    assert_eq!(check.status.code(), Some(0));
}

#[test]
fn failure_report_is_machine_readable() {
    let dir = TempDir::new().unwrap();
    // support {0, 2, 3, 7}: the extreme-distance scan finds no candidate
    let x = write(&dir, "x.json", r#"{"n": 8, "entries": [[0, 1.0], [2, 0.6], [3, -1.4], [7, 0.9]]}"#);
    let a = path(&dir, "a.json");
    let report = path(&dir, "report.json");
    assert!(phaseret(&["autocorr", "--in", s(&x), "--out", s(&a)]).status.success());
    let out = phaseret(&["recover", "--algo", "comb", "--in", s(&a), "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(6));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["status"], "failure");
    assert!(v["kind"].is_string());
}

#[test]
fn factorize_lists_two_classes() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"n": 3, "lags": [62.0, 35.0, 6.0]}"#);
    let out = path(&dir, "f.json");
    assert!(phaseret(&["factorize", "--in", s(&a), "--out", s(&out)]).status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["count"], 2);
    assert_eq!(v["classes"].as_array().unwrap().len(), 2);
}

#[test]
fn reversal_is_equivalent() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.json", r#"{"n": 4, "entries": [[0, 1.0], [1, 5.0], [2, 6.0]]}"#);
    let y = write(&dir, "y.json", r#"{"n": 4, "entries": [[1, 6.0], [2, 5.0], [3, 1.0]]}"#);
    let z = write(&dir, "z.json", r#"{"n": 4, "entries": [[0, 3.0], [1, 7.0], [2, 2.0]]}"#);
    assert_eq!(phaseret(&["check-equal", "--a", s(&x), "--b", s(&y)]).status.code(), Some(0));
    assert_eq!(phaseret(&["check-equal", "--a", s(&x), "--b", s(&z)]).status.code(), Some(1));
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (p, q) = (path(&dir, "p.json"), path(&dir, "q.json"));
    for out in [&p, &q] {
        let r = phaseret(&["generate", "--n", "64", "--s", "5", "--seed", "3", "--out", s(out)]);
        assert!(r.status.success());
    }
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
}

#[test]
fn distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.json");
    assert_eq!(phaseret(&["autocorr", "--in", s(&missing)]).status.code(), Some(3));
    let bad = write(&dir, "bad.json", "{ not json");
    assert_eq!(phaseret(&["autocorr", "--in", s(&bad)]).status.code(), Some(4));
    let a = write(&dir, "a.json", r#"{"n": 4, "entries": [[0, 1.0]]}"#);
    let b = write(&dir, "b.json", r#"{"n": 5, "entries": [[0, 1.0]]}"#);
    assert_eq!(phaseret(&["check-equal", "--a", s(&a), "--b", s(&b)]).status.code(), Some(5));
    let lags = write(&dir, "lags.json", r#"{"n": 2, "lags": [1.0, 0.5]}"#);
    assert_eq!(
        phaseret(&["recover", "--algo", "sdp", "--k", "9", "--in", s(&lags)]).status.code(),
        Some(5)
    );
    assert_eq!(phaseret(&["generate", "--n"]).status.code(), Some(2));
}

#[test]
fn experiment_writes_identical_csv() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "out.csv");
    let cfg = write(
        &dir,
        "exp.cfg",
        &format!("n = 512\nsparsities = 3, 5\ntrials_per_point = 5\nseed = 4\noutput_path = {}\n", s(&csv)),
    );
    assert!(phaseret(&["experiment", "--config", s(&cfg)]).status.success());
    let first = std::fs::read(&csv).unwrap();
    assert!(phaseret(&["experiment", "--config", s(&cfg)]).status.success());
    assert_eq!(first, std::fs::read(&csv).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("algorithm,n,s,trials,successes,success_rate,mean_runtime_ms,"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_experiment_config_is_malformed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "exp.cfg", "n = 8\nsparsities = 20\n");
    assert_eq!(phaseret(&["experiment", "--config", s(&cfg)]).status.code(), Some(4));
}
