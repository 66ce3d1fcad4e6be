use std::path::Path;
use std::process::{Command, Output};

use approx::assert_relative_eq;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spde-msd"))
}

fn run(sub: &str, dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.json"));
    std::fs::write(&cfg, config).unwrap();
    bin()
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(2)
    );
    assert_eq!(bin().arg("msd").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn config_errors_exit_3_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "msd",
        dir.path(),
        r#"{"problem": {"name": "ginzburg_landau"}, "n_pathz": 3}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_pathz"), "{err}");

    let out = run("msd", dir.path(), r#"{"n_paths": 3}"#, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem"));

    let out = run(
        "msd",
        dir.path(),
        r#"{"problem": {"name": "ginzburg_landau"}, "scheme": {"theta": 1.5}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(3));

    let out = run("msd", dir.path(), "{ not json", &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_file_exits_4() {
    let out = bin()
        .args(["analyze", "--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn msd_writes_csv_plot_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "msd",
        dir.path(),
        r#"{"problem": {"name": "ginzburg_landau"}, "grid": {"n_points": 16},
            "scheme": {"n_steps": 50}, "n_paths": 16, "seed": 3}"#,
        &["--no-timestamp"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let o = dir.path().join("out");
    let csv = std::fs::read_to_string(o.join("msd.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,time,msd,stderr"));
    assert_eq!(lines.count(), 51);
    let gp = std::fs::read_to_string(o.join("msd.gp")).unwrap();
    assert!(gp.contains("'msd.csv'"));
    let summary = read_json(&o.join("msd.json"));
    assert_eq!(summary["n_paths"], 16);
    assert_eq!(summary["blowup_fraction"], 0.0);
    assert!(summary["decay_ratio"].as_f64().unwrap() < 1.0);

    // overrides on the command line win over the file
    let out = run(
        "msd",
        dir.path(),
        r#"{"problem": {"name": "ginzburg_landau"}, "grid": {"n_points": 16},
            "scheme": {"n_steps": 10}, "n_paths": 16}"#,
        &["--paths", "4", "--seed", "11"],
    );
    assert!(out.status.success());
    let summary = read_json(&dir.path().join("out/msd.json"));
    assert_eq!(summary["n_paths"], 4);
    assert_eq!(summary["config"]["seed"], 11);
    let csv = std::fs::read_to_string(dir.path().join("out/msd.csv")).unwrap();
    assert!(csv.starts_with("# generated"));
}

#[test]
fn explicit_cahn_hilliard_sweep_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "sweep",
        dir.path(),
        r#"{"problem": {"name": "cahn_hilliard"}, "noise": {"kind": "linear"},
            "grid": {"n_points": [16, 32]}, "scheme": {"theta": 0, "n_steps": 50},
            "n_paths": 8}"#,
        &["--no-timestamp"],
    );
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let o = dir.path().join("out");
    for n in [16, 32] {
        assert!(o.join(format!("sweep_{n}.csv")).exists());
    }
    let sweep = read_json(&o.join("sweep.json"));
    assert_eq!(sweep["runs"].as_array().unwrap().len(), 2);
    assert!(sweep["runs"][1]["blowup_fraction"].as_f64().unwrap() > 0.5);
}

#[test]
fn analyze_verdicts_by_theta() {
    let dir = tempfile::tempdir().unwrap();
    for (theta, verdict) in [
        ("1", "contractive"),
        ("0.25", "not_contractive"),
        ("0.5", "indeterminate"),
    ] {
        let cfg = format!(
            r#"{{"problem": {{"name": "ginzburg_landau"}}, "scheme": {{"theta": {theta}}},
                "analysis": {{"M": 1.0}}, "n_paths": 4}}"#
        );
        let out = run("analyze", dir.path(), &cfg, &[]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let report = &read_json(&dir.path().join("out/analyze.json"))["report"];
        assert_eq!(report["verdict"], verdict, "theta = {theta}");
        assert_eq!(report["constants"]["M"], 1.0);
        assert!(report["eqpar"].is_boolean());
    }
}

#[test]
fn order_of_deterministic_implicit_euler() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "order",
        dir.path(),
        r#"{"problem": {"name": "ginzburg_landau"}, "grid": {"n_points": 16},
            "noise": {"kind": "additive", "epsilon": 0}, "scheme": {"final_time": 0.25},
            "order": {"dt_exponents": [4, 5, 6, 7, 8]}, "n_paths": 2}"#,
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let order = &read_json(&dir.path().join("out/order.json"))["order"];
    assert_relative_eq!(order["slope"].as_f64().unwrap(), 1.0, max_relative = 0.25);
    assert_eq!(order["errors"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_dumps_both_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "simulate",
        dir.path(),
        r#"{"problem": {"name": "uncoupled"}, "grid": {"n_points": 8},
            "scheme": {"n_steps": 5}}"#,
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sim = read_json(&dir.path().join("out/simulate.json"));
    assert_eq!(sim["times"].as_array().unwrap().len(), 6);
    assert_eq!(sim["u_states"][0].as_array().unwrap().len(), 14);
    assert!(sim["blowup_step"].is_null());
}
