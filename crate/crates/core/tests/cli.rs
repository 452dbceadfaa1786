use std::path::{Path, PathBuf};

use orbidual::cli::{main_with, ResidualReport};
use serde_json::{json, Value};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (vec![], vec![]);
    let mut argv = vec!["orbidual"];
    argv.extend_from_slice(args);
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn config(dir: &Path, name: &str, scenario: &str, params: Value, seed: u64) -> PathBuf {
    let out = dir.join(format!("out-{name}"));
    write_json(
        dir,
        &format!("{name}.json"),
        &json!({"spec_version": 1, "scenario": scenario, "params": params, "seed": seed, "output_dir": out}),
    )
}

fn report(dir: &Path, name: &str) -> ResidualReport {
    let text = std::fs::read_to_string(dir.join(format!("out-{name}")).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn list_scenarios_text_and_json() {
    let (code, out, _) = run(&["list-scenarios"]);
    assert_eq!(code, 0);
    assert!(out.lines().count() >= 3);
    let (code, out, _) = run(&["list-scenarios", "--json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["rigidbody-pendulum", "lu-weinstein-su2", "monodromic-string"]);
}

#[test]
fn plugin_include_registers_custom_scenario() {
    let dir = tempfile::tempdir().unwrap();
    write_json(
        dir.path(),
        "plugin.json",
        &json!({"spec_version": 1, "scenarios": [
            {"name": "short-pendulum", "base": "rigidbody-pendulum", "description": "short run", "params": {"T": 0.5}}
        ]}),
    );
    let cfg = write_json(
        dir.path(),
        "cfg.json",
        &json!({"spec_version": 1, "scenario": "short-pendulum", "include": ["plugin.json"], "output_dir": dir.path().join("out")}),
    );
    let (code, out, _) = run(&["list-scenarios", "--json", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let custom = v.as_array().unwrap().iter().find(|e| e["name"] == "short-pendulum").unwrap();
    assert_eq!(custom["custom"], true);
    assert_eq!(custom["base"], "rigidbody-pendulum");

    let (code, _, err) = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn listing_survives_a_broken_plugin() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let p = dir.path().join("broken.json");
    let (code, out, err) = run(&["list-scenarios", "--include", p.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.lines().count() >= 3);
    assert!(err.contains("warning"));
}

#[test]
fn rigid_defaults_pass_and_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "rigid", "rigidbody-pendulum", json!({}), 0);
    let (code, out, err) = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}{err}");
    let rep = report(dir.path(), "rigid");
    assert!(rep.pass);
    assert!(rep.metrics["pendulum_ode_residual"] < 1e-4);
    let csv = std::fs::read_to_string(dir.path().join("out-rigid/pendulum.csv")).unwrap();
    assert!(csv.starts_with("t,theta,p"));
    assert_eq!(csv.lines().count(), 5002);
}

#[test]
fn root_alpha_is_a_detected_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "root", "lu-weinstein-su2", json!({"alpha": [0.0, 0.6, 0.0]}), 1);
    let (code, _, err) = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rep = report(dir.path(), "root");
    assert!(rep.pass && rep.expected_fail);
    assert!(rep.metrics["poisson_residual"] > 1e-3);
}

#[test]
fn tightened_tolerance_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let params = json!({"T": 0.2, "tolerances": {"duality": 1e-30}});
    let cfg = config(dir.path(), "tight", "lu-weinstein-su2", params, 1);
    let (code, _, err) = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("residual_A"));
    assert!(!report(dir.path(), "tight").pass);
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let params = json!({"T": 0.2, "operator": {"kind": "random", "scale": 0.3}});
    let a = config(dir.path(), "a", "lu-weinstein-su2", params.clone(), 5);
    let b = config(dir.path(), "b", "lu-weinstein-su2", params, 5);
    let (code, _, err) = run(&["run", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let ra = std::fs::read(dir.path().join("out-a/report.json")).unwrap();
    let rb = std::fs::read(dir.path().join("out-b/report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn duality_prints_the_pair_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "d", "lu-weinstein-su2", json!({"T": 0.2}), 2);
    let (code, out, _) = run(&["duality", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    for key in ["scenario", "T", "dt", "residual_A", "residual_B", "momentum_drift", "energy_drift"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let cfg = config(dir.path(), "s", "monodromic-string", json!({}), 2);
    assert_eq!(run(&["duality", cfg.to_str().unwrap()]).0, 2);
}

#[test]
fn bad_configs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = config(dir.path(), "u", "no-such-scenario", json!({}), 0);
    let (code, _, err) = run(&["run", unknown.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("rigidbody-pendulum"), "schema dump lists scenarios: {err}");

    let bad_dt = config(dir.path(), "dt", "rigidbody-pendulum", json!({"dt": 0.0}), 0);
    assert_eq!(run(&["run", bad_dt.to_str().unwrap()]).0, 2);
    let bad_key = config(dir.path(), "k", "rigidbody-pendulum", json!({"inertias": [1, 2, 3]}), 0);
    assert_eq!(run(&["run", bad_key.to_str().unwrap()]).0, 2);
    let version = write_json(dir.path(), "v.json", &json!({"spec_version": 2, "scenario": "rigidbody-pendulum"}));
    assert_eq!(run(&["run", version.to_str().unwrap()]).0, 2);
    assert_eq!(run(&["run", dir.path().join("missing.json").to_str().unwrap()]).0, 2);
    assert_eq!(run(&["run"]).0, 2);
}

#[test]
fn check_filter_and_corruption() {
    let (code, out, _) = run(&["check", "extension"]);
    assert_eq!(code, 0, "{out}");
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(!rows.is_empty() && rows.iter().all(|l| l.starts_with("extension")));

    let (code, out, _) = run(&["check", "--corrupt-constants", "liecore"]);
    assert_eq!(code, 1);
    assert!(out.contains("FAIL"));
}

#[test]
fn check_without_filter_runs_every_suite() {
    let (code, out, _) = run(&["check"]);
    assert_eq!(code, 0, "{out}");
    for suite in ["liecore", "groups", "extension", "hamspaces", "dynamics", "loopx"] {
        assert!(out.lines().any(|l| l.starts_with(suite)), "{suite}");
    }
}
