//! CLI surface checks: exit codes, artifact round-trips through the library
//! loaders, and the shipped benchmark config matching the built-in default.

use std::path::Path;
use std::process::Command;

use neurodp::HPolytope;
use neurodp_cli::config::ExperimentConfig;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_neurodp")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::benchmark();
    cfg.horizon = 3;
    cfg.training.q_per_stage = 40;
    cfg.training.hidden_units = vec![6];
    cfg.training.max_epochs = 10;
    cfg.simulation.t = 4;
    cfg.simulation.initial_states = vec![vec![1.0, 1.0]];
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn shipped_benchmark_config_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    let loaded = ExperimentConfig::load(&path).unwrap();
    let builtin = ExperimentConfig::benchmark();
    let a = serde_json::to_value(&loaded).unwrap();
    let b = serde_json::to_value(&builtin).unwrap();
    assert_eq!(a, b, "configs/benchmark.json drifted from the built-in default");
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = Command::new(bin())
        .args(["sets", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_initial_state_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = Command::new(bin())
        .args(["simulate", "--controller", "exact", "--x0", "9.9,9.9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_models_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for args in [
        vec!["train-policy"],
        vec!["simulate", "--controller", "value", "--x0", "1,1"],
        vec!["compare"],
    ] {
        let out = Command::new(bin())
            .args(&args)
            .args(["--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join("out"))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?} should fail without trained models");
    }
}

#[test]
fn sets_artifacts_round_trip_through_loaders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = Command::new(bin())
        .args(["sets", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    for k in 0..=3 {
        let text = std::fs::read_to_string(out_dir.join(format!("sets/X_{k}.json"))).unwrap();
        let set: HPolytope = serde_json::from_str(&text).unwrap();
        assert_eq!(set.dim(), 2);
    }
    let summary = std::fs::read_to_string(out_dir.join("sets_summary.csv")).unwrap();
    assert!(summary.starts_with("k,rows,chebyshev_radius"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn simulate_writes_trajectory_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    for cmd in ["train-value", "train-policy"] {
        let out = Command::new(bin())
            .args([cmd, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = Command::new(bin())
        .args(["simulate", "--controller", "policy", "--x0", "1,1", "--svg", "--trace", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("trajectory_policy_1_1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,x1,x2,u1,u2,stage_cost");
    // 4 input rows plus the state-only terminal row.
    assert_eq!(csv.lines().count(), 6);
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("4,"));
    assert!(last.ends_with(",,"), "terminal row should carry the state only: {last}");

    assert!(out_dir.join("trajectory_policy_1_1.svg").exists());

    // Value-controller trace on demand.
    let out = Command::new(bin())
        .args(["simulate", "--controller", "value", "--x0", "1,1", "--trace", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let trace = std::fs::read_to_string(out_dir.join("fw_trace_value_1_1.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,gap"));
    assert!(trace.lines().count() >= 2);

    // The model artifact reloads through the library loader.
    let policy: neurodp::Mlp =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("models/policy.json")).unwrap())
            .unwrap();
    assert_eq!(policy.output_dim(), 8);
}

#[test]
fn bad_x0_argument_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = Command::new(bin())
        .args(["simulate", "--controller", "exact", "--x0", "one,two", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
