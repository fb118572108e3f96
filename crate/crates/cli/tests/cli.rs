use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn factcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factcheck"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let run = |out: &Path| factcheck(&["estimate", "--horizon", "20000", "--seed", "4", "--out", path(out)]);
    let summary = stdout_json(&run(&a));
    assert_eq!(summary["steps"], 20000);
    assert_eq!(summary["seed"], 4);
    run(&b);
    for name in ["trajectory.csv", "resets.jsonl", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    fs::write(&config, "# test run\nseed = 3\nhorizon = 1000\npi = 0.2, 0.3\nmode = plain\n").unwrap();
    let out = dir.path().join("out");
    let summary = stdout_json(&factcheck(&[
        "--config",
        path(&config),
        "estimate",
        "--horizon",
        "500",
        "--out",
        path(&out),
    ]));
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["steps"], 500);
    assert_eq!(summary["n"], 2);
    assert_eq!(summary["mode"], "plain");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = factcheck(&["estimate", "--pi", "0.1,1.5"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("pi"));

    assert_eq!(factcheck(&["estimate", "--schedule", "power:0.4"]).status.code(), Some(2));
    assert_eq!(factcheck(&["frobnicate"]).status.code(), Some(2));

    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "colour = blue\n").unwrap();
    assert_eq!(factcheck(&["--config", path(&conf), "estimate"]).status.code(), Some(2));

    let missing = dir.path().join("missing.conf");
    assert_eq!(factcheck(&["--config", path(&missing), "estimate"]).status.code(), Some(4));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let io = factcheck(&["estimate", "--horizon", "10", "--out", path(&blocker.join("x"))]);
    assert_eq!(io.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&io.stderr).contains("file"));
}

#[test]
fn verify_reports_checks_and_named_failures() {
    let dir = tempfile::tempdir().unwrap();
    let ok = factcheck(&["verify", "--quick", "--out", path(dir.path())]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
    assert!(text.contains("reset_finiteness"));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("n,seed,checks_run,max_violation\n"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().len() >= 9);

    let bad = factcheck(&["verify", "--quick", "--corrupt-g", "1.001", "--out", path(dir.path())]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("check failed: normalization"));
}

#[test]
fn simulate_writes_stream_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = factcheck(&["simulate", "--horizon", "50", "--pi", "0.1,0.4", "--out", path(dir.path())]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("stream.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,s,r_1,r_2");
    assert_eq!(lines.len(), 51);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn decode_single_agent_error_is_its_flip_rate() {
    let v = stdout_json(&factcheck(&["decode", "--pi", "0.3", "--alpha", "1"]));
    assert!((v["error"].as_f64().unwrap() - 0.3).abs() <= 1e-15);
    let v = stdout_json(&factcheck(&["decode", "--rounds", "1000"]));
    assert_eq!(v["alpha"].as_array().unwrap().len(), 3);
    assert_eq!(v["monte_carlo"]["rounds"], 1000);
}

#[test]
fn odeflow_and_equilibria_and_lyapunov() {
    let dir = tempfile::tempdir().unwrap();
    let flow = stdout_json(&factcheck(&["odeflow", "--duration", "2", "--step", "0.1", "--out", path(dir.path())]));
    assert!(flow["V"].as_f64().unwrap() >= 0.0);
    let csv = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "s,x_1,x_2,x_3,V");
    assert_eq!(csv.lines().count(), 22);

    let set = stdout_json(&factcheck(&["equilibria", "--starts", "40", "--out", path(dir.path())]));
    assert_eq!(set["boundary"].as_array().unwrap().len(), 6);
    assert!(!set["interior"].as_array().unwrap().is_empty());
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("equilibria.json")).unwrap()).unwrap();
    assert_eq!(saved, set);

    let at_pi = stdout_json(&factcheck(&["lyapunov", "--x", "0.1,0.2,0.3"]));
    assert!(at_pi["V"].as_f64().unwrap() <= 1e-12);
    assert_eq!(at_pi["equilibrium"], true);
}
