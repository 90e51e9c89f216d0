use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fracdrift(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracdrift"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(out: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(name).join("summary.json")).unwrap()).unwrap()
}

#[test]
fn selftest_exits_zero_and_records_versions() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracdrift(&["selftest", "--seed", "11"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "selftest");
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["seed"], 11);
    assert_eq!(s["status"], "ok");
    assert!(s["versions"]["fracdrift"].is_string());
    assert!(s["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
    assert!(dir.path().join("selftest/selftest.csv").exists());
}

#[test]
fn malformed_json_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"schema_version\": 1, \"name\": \"x\", \"order\": \"high\"}").unwrap();
    let out = fracdrift(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`order`"));
}

#[test]
fn unknown_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracdrift(&["run", "no-such-scenario"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn misplaced_coefficients_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(include_str!("../scenarios/forward.json")).unwrap();
    v["coefficients"]["c"][0]["center"] = serde_json::json!([2.0]);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, v.to_string()).unwrap();
    let out = fracdrift(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coefficients"));
}

#[test]
fn unreachable_target_fails_with_summary_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(include_str!("../scenarios/runge.json")).unwrap();
    v["experiment"]["epsilon"] = serde_json::json!(1e-9);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, v.to_string()).unwrap();
    let out = fracdrift(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let s = summary(dir.path(), "runge");
    assert_eq!(s["status"], "failed");
    assert_eq!(s["results"]["selected"]["unreachable"], true);
    assert!(dir.path().join("runge/sweep.csv").exists());
}

#[test]
fn list_scenarios_names_every_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracdrift(&["list-scenarios"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["selftest", "forward", "dnmap", "runge", "reconstruct", "stability", "genericity"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name}\t"))), "{name}");
    }
}

#[test]
fn weight_cache_and_dump_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_fracdrift"))
            .args(["run", "dnmap", "--dump-weights", "--threads", "2", "--weight-cache"])
            .arg(&cache)
            .arg("--out-dir")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(summary(&a, "dnmap")["weight_cache"], "miss");
    assert_eq!(summary(&b, "dnmap")["weight_cache"], "hit");
    for file in ["dn_map.csv", "weights.csv"] {
        assert_eq!(fs::read(a.join("dnmap").join(file)).unwrap(), fs::read(b.join("dnmap").join(file)).unwrap());
    }
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(a.join("dnmap/dn_map.json")).unwrap()).unwrap();
    assert_eq!(sidecar["coefficient_sha256"].as_str().unwrap().len(), 64);
}
