mod common;

use std::path::Path;

use serde_json::Value;

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn config(name: &str) -> String {
    path_str(&common::configs_dir().join(name))
}

fn meta(csv: &Path) -> Value {
    serde_json::from_str(&common::read(&csv.with_extension("meta.json"))).unwrap()
}

#[test]
fn simulate_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let status = common::run_bin(&["simulate", "--config", &config("trajectories.json"), "-o", &path_str(&out)]);
    assert_eq!(status.status.code(), Some(0));
    let rows = common::csv_rows(&out);
    assert_eq!(
        rows[0][..5],
        ["replica", "step", "mean_strategy", "mean_temperature", "contribution_rate"]
    );
    assert_eq!(rows[0].len(), 5 + 5);
    assert_eq!(rows.len(), 1 + 500);
    for row in &rows[1..] {
        let x: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
    let m = meta(&out);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["master_seed"], 1);
    assert_eq!(m["config"]["alpha"], 0.1);
    let defaults: Vec<&str> = m["defaults_applied"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(defaults.contains(&"beta"));
}

#[test]
fn sidecar_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    common::run_bin(&[
        "simulate",
        "--config",
        &config("trajectories.json"),
        "--temperature",
        "0.8",
        "--iterations",
        "50",
        "-o",
        &path_str(&first),
    ]);
    let rerun_cfg = dir.path().join("rerun.json");
    std::fs::write(&rerun_cfg, meta(&first)["config"].to_string()).unwrap();
    let second = dir.path().join("b.csv");
    let out = common::run_bin(&["simulate", "--config", &path_str(&rerun_cfg), "-o", &path_str(&second)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn manifold_covers_the_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("manifold.csv");
    let status = common::run_bin(&["manifold", "--m-max", "3", "--temperature", "0.1", "--resolution", "21", "-o", &path_str(&out)]);
    assert_eq!(status.status.code(), Some(0));
    let rows = common::csv_rows(&out);
    assert_eq!(
        rows[0][..6],
        ["j0", "j1", "root_index", "x_star", "initial_derivative_sign", "reached_from_half"]
    );
    let mut cells: Vec<(String, String)> = rows[1..].iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    cells.dedup();
    assert_eq!(cells.len(), 21 * 22 / 2);
    for r in &rows[1..] {
        let (j0, j1): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!(j0 + j1 <= 3.0);
    }
}

#[test]
fn adaptive_neutral_game_is_an_attractor() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adaptive.csv");
    let status = common::run_bin(&["adaptive", "--reward", "0,1,2,3", "--start-t", "0.3", "-o", &path_str(&out)]);
    assert_eq!(status.status.code(), Some(0));
    let rows = common::csv_rows(&out);
    assert_eq!(rows[0], ["resident_T", "fitness_up", "fitness_down", "decision"]);
    assert_eq!(rows[1], ["0.3", "0", "0", "stop"]);
    let m = meta(&out);
    assert_eq!(m["results"]["classification"], "attractor");
    assert_eq!(m["results"]["final_T"], 0.3);
}

#[test]
fn fixation_row_shape() {
    let out = common::run_bin(&[
        "fixation",
        "--config",
        &config("fixation.json"),
        "--resident-t",
        "0.5",
        "--mutant-t",
        "0.5",
        "--trials",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "resident_T,mutant_T,trials,fixations,extinctions,censored,p_hat,se");
    let fields: Vec<&str> = lines[1].split(',').collect();
    let counts: Vec<u64> = fields[3..6].iter().map(|f| f.parse().unwrap()).collect();
    assert_eq!(counts.iter().sum::<u64>(), 200);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| common::run_bin(args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(64));
    assert_eq!(code(&["manifold", "--unknown-flag"]), Some(64));
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["simulate", "--config", &config("trajectories.json"), "--temperature", "0"]), Some(1));
    assert_eq!(code(&["simulate", "--config", &config("trajectories.json"), "--group-size", "1"]), Some(1));
    assert_eq!(code(&["simulate", "--config", "/no/such/file.json"]), Some(1));
    assert_eq!(
        code(&["fixation", "--config", &config("trajectories.json"), "--resident-t", "1", "--mutant-t", "1", "--trials", "0"]),
        Some(1)
    );
    assert_eq!(code(&["manifold", "--temperature=-1"]), Some(1));
}

#[test]
fn config_errors_name_field_and_constraint() {
    let out = common::run_bin(&["simulate", "--config", &config("trajectories.json"), "--temperature", "0"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("temperature must be > 0"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"group_size": 3, "alpha": 0.1, "temprature": 1}"#).unwrap();
    let out = common::run_bin(&["simulate", "--config", &path_str(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn non_convergence_exits_2_and_keeps_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.csv");
    let status = common::run_bin(&[
        "ode-equilibrium",
        "--reward",
        "0,4,8,10",
        "--mutant-t",
        "0.5",
        "--max-time",
        "0.01",
        "-o",
        &path_str(&out),
    ]);
    assert_eq!(status.status.code(), Some(2));
    let rows = common::csv_rows(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][7], "false");
    assert_eq!(meta(&out)["converged"], false);
}

#[test]
fn thread_count_from_environment() {
    let run = |threads: &str| {
        std::process::Command::new(env!("CARGO_BIN_EXE_evoq"))
            .args(["sweep-reward-space", "--resolution", "5", "--step", "0.05"])
            .env("EVOQ_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    let three = run("3");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, three.stdout);
    assert_eq!(run("zero").status.code(), Some(64));
}

#[test]
fn temperature_sweep_records_reward_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noreward.json");
    std::fs::write(
        &cfg,
        r#"{"group_size": 5, "alpha": 0.1, "temperature": 0.5, "replacement_rate": 0.05,
            "iterations": 20, "replicas": 2, "master_seed": 8}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep.csv");
    let status = common::run_bin(&[
        "sweep-temp-replacement",
        "--config",
        &path_str(&cfg),
        "--temperatures",
        "0.5,50",
        "--replacement-rates",
        "0,0.1",
        "-o",
        &path_str(&out),
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let rows = common::csv_rows(&out);
    assert_eq!(rows[0][..4], ["temperature", "replacement_rate", "replicas", "mean_strategy"]);
    assert_eq!(rows.len(), 5);
    let notes = meta(&out)["assumptions"].to_string();
    assert!(notes.contains("assumed"), "{notes}");
}

#[test]
fn hot_learners_explore_in_every_replacement_column() {
    let out = common::run_bin(&[
        "sweep-temp-replacement",
        "--config",
        &config("temperature_sweep.json"),
        "--iterations",
        "300",
        "--replicas",
        "10",
        "--temperatures",
        "1000",
        "--replacement-rates",
        "0,0.05,0.2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let mean: f64 = fields[3].parse().unwrap();
        assert!((mean - 0.5).abs() < 0.01, "{line}");
    }
}
