use std::fs;

use factcheck_core::harness::{run_experiment, verify_suite, ExperimentConfig, VerifyConfig};
use factcheck_core::Error;

fn config(out: &std::path::Path, horizon: u64) -> ExperimentConfig {
    ExperimentConfig {
        horizon,
        seed: 11,
        out: out.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&config(&a, 50_000)).unwrap();
    run_experiment(&config(&b, 50_000)).unwrap();
    for name in ["trajectory.csv", "resets.jsonl", "summary.json"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert!(!x.is_empty() || name == "resets.jsonl");
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn output_formats() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&config(dir.path(), 30_000)).unwrap();

    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,P_1,P_2,P_3,gamma,reset,V,dist_pi,dist_1mpi,dist_half");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 10));
    let ts: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*ts.last().unwrap(), 30_000);
    // Shortest round-trip formatting reloads to the same value.
    let p: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert_eq!(p, summary.final_estimate[0]);

    let resets = fs::read_to_string(dir.path().join("resets.jsonl")).unwrap();
    assert_eq!(resets.lines().count(), summary.reset_count);
    for line in resets.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["t"].is_u64() && v["y"].as_array().unwrap().len() == 3 && v["gamma_after"].is_u64());
    }

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["steps"], 30_000);
    assert!(json["census_distance"].as_f64().unwrap() <= json["dist_pi"].as_f64().unwrap());
}

#[test]
fn zero_horizon_summary_is_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&config(dir.path(), 0)).unwrap();
    assert_eq!(summary.steps, 0);
    assert_eq!(summary.last_reset, None);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn io_errors_carry_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = run_experiment(&config(&blocker.join("sub"), 10)).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("file"));
}

#[test]
fn default_verify_passes_and_is_deterministic() {
    let config = VerifyConfig::default();
    let a = verify_suite(&config).unwrap();
    for check in &a.checks {
        assert!(check.passed, "{check:?}");
    }
    assert_eq!(a, verify_suite(&config).unwrap());
    let mut csv = Vec::new();
    a.write_sweep_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("n,seed,checks_run,max_violation\n2,0,"));
}
