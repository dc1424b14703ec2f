use std::path::Path;
use std::process::Command;

use expbound_cli::run;
use serde_json::Value;

fn exec(args: &[&str]) -> i32 {
    run(std::iter::once("expbound").chain(args.iter().copied()))
}

fn dir_arg(d: &Path) -> String {
    d.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn prop1_writes_problem_runs_and_report() {
    let t = tempfile::tempdir().unwrap();
    let d = dir_arg(t.path());
    assert_eq!(
        exec(&["prop1", "--m", "3", "--delta", "0.6", "--runs", "4000", "--out-dir", &d]),
        0
    );
    assert!(t.path().join("prop1.problem.json").exists());
    assert_eq!(
        header(&t.path().join("prop1.runs.csv")),
        ["run_id", "total_gap", "stages", "truncated"]
    );
    let rows = csv::Reader::from_path(t.path().join("prop1.runs.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 4000);
    let r = read_json(&t.path().join("prop1.report.json"));
    assert_eq!(r["schema_version"], "expbound.report.v1");
    assert_eq!(r["command"], "prop1");
    assert_eq!(r["pass"], true);
}

#[test]
fn inadmissible_prop1_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(
        exec(&["prop1", "--m", "2", "--delta", "0.4", "--out-dir", &dir_arg(t.path())]),
        1
    );
}

#[test]
fn prop2_below_two_thirds_reports_unmet_hypothesis() {
    let t = tempfile::tempdir().unwrap();
    let d = dir_arg(t.path());
    assert_eq!(
        exec(&["prop2", "--delta", "0.1", "--n-max", "2000", "--out-dir", &d]),
        2
    );
    assert_eq!(
        header(&t.path().join("prop2.sequence.csv")),
        ["n", "eps", "rho", "eps_partial", "precision_partial"]
    );
}

#[test]
fn bandit_rejects_delta_one() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(exec(&["bandit", "--delta", "1.0", "--out-dir", &dir_arg(t.path())]), 1);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(exec(&["prop1", "--no-such-flag"]), 1);
    assert_eq!(exec(&["frobnicate"]), 1);
    assert_eq!(exec(&["--help"]), 0);
}

#[test]
fn config_file_fills_flags_and_command_line_wins() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"m": 4, "delta": 0.7, "runs": 3000, "master-seed": 5, "out-dir": "{}", "name": "fromfile"}}"#,
            dir_arg(t.path())
        ),
    )
    .unwrap();
    let c = dir_arg(&cfg);
    assert_eq!(exec(&["prop1", "--config", &c, "--runs", "2000"]), 0);
    let r = read_json(&t.path().join("fromfile.report.json"));
    assert_eq!(r["parameters"]["m"], 4);
    assert_eq!(r["experimentation"]["runs"], 2000);
    assert_eq!(r["experimentation"]["master_seed"], 5);
}

#[test]
fn unknown_config_key_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"m": 3, "bogus": 1}"#).unwrap();
    assert_eq!(
        exec(&["prop1", "--config", &dir_arg(&cfg), "--out-dir", &dir_arg(t.path())]),
        1
    );
}

#[test]
fn simulate_then_verify() {
    let t = tempfile::tempdir().unwrap();
    let d = dir_arg(t.path());
    assert_eq!(exec(&["prop1", "--runs", "100", "--out-dir", &d]), 0);
    let problem = dir_arg(&t.path().join("prop1.problem.json"));
    assert_eq!(
        exec(&[
            "simulate",
            "--problem",
            &problem,
            "--rule",
            "prop1",
            "--runs",
            "3000",
            "--out-dir",
            &d
        ]),
        0
    );
    let report = t.path().join("simulate.report.json");
    assert_eq!(exec(&["verify", "--report", &dir_arg(&report)]), 0);

    // A report whose mean sits far above the bound fails the check.
    let mut v = read_json(&report);
    v["experimentation"]["mean_total_gap"] = Value::from(10.0);
    let bad = t.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(exec(&["verify", "--report", &dir_arg(&bad)]), 3);
}

#[test]
fn simulate_cutoff_needs_kstar_and_alpha() {
    let t = tempfile::tempdir().unwrap();
    let d = dir_arg(t.path());
    assert_eq!(
        exec(&[
            "bandit",
            "--paths",
            "10",
            "--runs",
            "100",
            "--cap",
            "200",
            "--visit-runs",
            "200",
            "--out-dir",
            &d
        ]),
        0
    );
    let problem = dir_arg(&t.path().join("bandit.problem.json"));
    assert_eq!(
        exec(&["simulate", "--problem", &problem, "--rule", "cutoff", "--out-dir", &d]),
        1
    );
    assert_eq!(
        exec(&[
            "simulate",
            "--problem",
            &problem,
            "--rule",
            "cutoff",
            "--kstar",
            "1",
            "--alpha",
            "1.0",
            "--runs",
            "500",
            "--cap",
            "500",
            "--out-dir",
            &d,
        ]),
        0
    );
}

#[test]
fn bandit_grid_lists_infeasible_cells() {
    let t = tempfile::tempdir().unwrap();
    let d = dir_arg(t.path());
    let code = exec(&[
        "bandit",
        "--grid",
        "--alpha-grid",
        "1.0,2.0",
        "--delta-grid",
        "0.8",
        "--p0a-grid",
        "0.2",
        "--paths",
        "20",
        "--runs",
        "200",
        "--cap",
        "300",
        "--visit-runs",
        "500",
        "--out-dir",
        &d,
    ]);
    assert_eq!(code, 0);
    let mut r = csv::Reader::from_path(t.path().join("bandit.grid.csv")).unwrap();
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(h.len(), 12);
    let status = h.iter().position(|c| c == "status").unwrap();
    let statuses: Vec<String> = r.records().map(|x| x.unwrap()[status].to_string()).collect();
    assert_eq!(statuses, ["solved", "infeasible"]);
    let report = read_json(&t.path().join("bandit.report.json"));
    assert_eq!(report["csv_columns"]["grid.csv"].as_array().unwrap().len(), 12);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_expbound");
    let t = tempfile::tempdir().unwrap();
    let d = dir_arg(t.path());
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["prop1", "--runs", "200", "--out-dir", &d]), Some(0));
    assert_eq!(code(&["prop1", "--m", "2", "--delta", "0.4"]), Some(1));
    assert_eq!(
        code(&["prop2", "--delta", "0.5", "--n-max", "500", "--out-dir", &d]),
        Some(2)
    );
}
