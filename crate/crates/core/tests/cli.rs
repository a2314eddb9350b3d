use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn sisim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sisim"));
    cmd.args(args).env_remove("SISIM_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, doc: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, doc.to_string()).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout holds a JSON report")
}

fn healthy() -> Value {
    json!({
        "horizon": 400,
        "seed": 5,
        "masters": [{"name": "cpu", "workload": {"synthetic": {"period": 20, "op": "read", "size_bytes": 4}}}],
        "watchdogs": [{"id": "hb", "deadline": 50, "target": {"heartbeat": "cpu"}, "rearm_period": 50}],
        "faults": [{"at": 100, "target": {"crash": "cpu"}}],
        "policy": {"on_watchdog": "reset_target"},
    })
}

fn unmonitored_crash() -> Value {
    json!({
        "horizon": 400,
        "masters": [{"name": "cpu", "workload": {"synthetic": {"period": 20, "op": "read", "size_bytes": 4}}}],
        "faults": [{"at": 100, "target": {"crash": "cpu"}}],
    })
}

#[test]
fn validate_accepts_a_good_scenario() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "ok.json", &healthy());
    let out = sisim(&["validate", p(&path)], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validation_errors_exit_one_with_paths() {
    let dir = TempDir::new().unwrap();
    let bad = json!({
        "horizon": 10,
        "masters": [{"name": "a"}, {"name": "a"}],
        "quotas": [{"subject": "ghost", "limit": 1, "mode": "caused"}],
    });
    let path = write(&dir, "bad.json", &bad);
    for sub in ["validate", "run"] {
        let out = sisim(&[sub, p(&path)], &[]);
        assert_eq!(out.status.code(), Some(1));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("/masters/1"), "{err}");
        assert!(err.contains("/quotas/0/subject"), "{err}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn syntax_errors_and_missing_files_exit_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"horizon\": ").unwrap();
    let out = sisim(&["run", p(&path)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syntax error"));

    let out = sisim(&["run", p(&dir.path().join("absent.json"))], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_exit_code_reflects_the_ftti_verdict() {
    let dir = TempDir::new().unwrap();
    let ok = sisim(&["run", p(&write(&dir, "ok.json", &healthy()))], &[]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report(&ok)["verdicts"]["ftti"], "pass");

    let fail = sisim(&["run", p(&write(&dir, "fail.json", &unmonitored_crash()))], &[]);
    assert_eq!(fail.status.code(), Some(2));
    assert_eq!(report(&fail)["verdicts"]["ftti"], "fail");
}

#[test]
fn seed_flag_beats_environment_beats_file() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", &healthy());
    let seed = |out: &Output| report(out)["seed"].as_u64().unwrap();
    assert_eq!(seed(&sisim(&["run", p(&path)], &[])), 5);
    assert_eq!(seed(&sisim(&["run", p(&path)], &[("SISIM_SEED", "11")])), 11);
    assert_eq!(seed(&sisim(&["run", p(&path), "--seed", "23"], &[("SISIM_SEED", "11")])), 23);
}

#[test]
fn mode_flag_overrides_the_integration_mode() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", &healthy());
    let coupled = report(&sisim(&["run", p(&path)], &[]));
    let loose = report(&sisim(&["run", p(&path), "--mode", "loose"], &[]));
    assert_eq!(coupled["mode"], "coupled");
    assert_eq!(loose["mode"], "loose");
    let effect = |r: &Value| r["interrupts"][0]["effect_at"].as_u64().unwrap();
    assert_eq!(effect(&loose) - effect(&coupled), 38);
}

#[test]
fn report_flag_writes_the_file() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", &healthy());
    let dest = dir.path().join("out.json");
    let out = sisim(&["run", p(&path), "--report", p(&dest)], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let stdout = sisim(&["run", p(&path)], &[]).stdout;
    assert_eq!(std::fs::read(&dest).unwrap(), stdout);
}

#[test]
fn campaign_is_identical_sequential_and_parallel() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", &healthy());
    let faults = write(
        &dir,
        "faults.json",
        &json!([
            {"at": 50, "target": {"crash": "cpu"}},
            {"at": 210, "target": {"crash": "cpu"}},
        ]),
    );
    let par = sisim(&["campaign", p(&path), "--faults", p(&faults)], &[]);
    let seq = sisim(&["campaign", p(&path), "--faults", p(&faults), "--sequential"], &[]);
    assert_eq!(par.status.code(), Some(0));
    assert_eq!(par.stdout, seq.stdout);
    let rows = report(&par)["campaign"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["label"], "control");
    assert!(rows[1..].iter().all(|r| r["detected"] == true));
}

#[test]
fn campaign_with_a_failing_fault_exits_two() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", &unmonitored_crash());
    let faults = write(&dir, "faults.json", &json!([{"at": 10, "target": {"crash": "cpu"}}]));
    let out = sisim(&["campaign", p(&path), "--faults", p(&faults)], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn campaign_rejects_faults_on_unknown_masters() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", &healthy());
    let faults = write(&dir, "faults.json", &json!([{"at": 10, "target": {"crash": "nobody"}}]));
    let out = sisim(&["campaign", p(&path), "--faults", p(&faults)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/0/target"));
}
