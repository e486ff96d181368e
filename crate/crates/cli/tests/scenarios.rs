use std::path::{Path, PathBuf};
use std::process::Command;

use rigidity_cli::{run_scenario, CliError, ScenarioConfig, Status};
use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn summary(run: &rigidity_cli::RunReport) -> &Value {
    &run.experiments[0].summary
}

#[test]
fn slab_trace_exits_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&scenario("slab_trace.json")).unwrap();
    let run = run_scenario(&cfg, dir.path()).unwrap();
    assert_eq!(run.experiments[0].status, Status::Ok);
    let times = summary(&run)["event_times"].as_array().unwrap();
    assert_eq!(times.len(), 1);
    assert!((times[0].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn annulus_conversion_matches_direct_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&scenario("annulus_convert.json")).unwrap();
    let run = run_scenario(&cfg, dir.path()).unwrap();
    let s = summary(&run);
    assert_eq!(run.experiments[0].status, Status::Ok, "{s}");
    assert_eq!(s["compared"], s["states"]);
    assert!(s["max_tau_deviation"].as_f64().unwrap() < 1e-4, "{s}");
    assert_eq!(s["step_bounds_hold"], Value::Bool(true));
}

#[test]
fn runs_are_deterministic() {
    let cfg = ScenarioConfig::load(&scenario("cylinder_isometry.json")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&cfg, a.path()).unwrap();
    run_scenario(&cfg, b.path()).unwrap();
    let read = |d: &Path| std::fs::read_to_string(d.join("isometry.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn settings_errors_carry_pointers() {
    let text = r#"{"metric": {"name": "minkowski_slab"}, "experiment": "trace",
                   "settings": {"x": [0, 0, 0], "v": [1, 0, 0.5], "stop": "sometimes"}}"#;
    let cfg = ScenarioConfig::from_json(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    match run_scenario(&cfg, dir.path()) {
        Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/settings/stop"),
        other => panic!("{other:?}"),
    }
    let text = r#"{"metric": {"name": "no_such_metric"}, "experiment": "trace",
                   "settings": {"x": [0, 0, 0], "v": [1, 0, 0.5]}}"#;
    let cfg = ScenarioConfig::from_json(text).unwrap();
    match run_scenario(&cfg, dir.path()) {
        Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/metric"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn numerical_aborts_are_reported() {
    // A spacelike start is rejected by the jet probe.
    let text = r#"{"metric": {"name": "minkowski_cylinder"}, "experiment": "recover_jet",
                   "settings": {"p": [0, 1, 0], "v": [0, 0, 1]}}"#;
    let cfg = ScenarioConfig::from_json(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = run_scenario(&cfg, dir.path()).unwrap();
    assert_eq!(run.experiments[0].status, Status::Error);
    assert!(run.experiments[0].error.is_some());
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rigidity"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = binary().args(["selftest", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"metrik": {}}"#).unwrap();
    let out = binary().args(["trace", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metrik"));

    let out = binary()
        .args(["recover_jet", "--config"])
        .arg(scenario("slab_trace.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "experiment mismatch is a configuration error");
}
