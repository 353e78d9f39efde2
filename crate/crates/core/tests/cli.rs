//! End-to-end checks of the benchmark binary: exit codes and artifacts.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ilq-games"))
}

#[test]
fn solve_intersection_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "solve",
            "--scenario",
            "intersection",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in ["report.json", "trajectory.csv", "trajectory.svg"] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    // Header + one row per step; time, 14 state, 6 control columns.
    assert_eq!(lines.len(), 51);
    assert_eq!(lines[1].split(',').count(), 21);
    let svg = std::fs::read_to_string(dir.path().join("trajectory.svg")).unwrap();
    assert_eq!(svg.matches("<path ").count(), 3);
}

#[test]
fn unknown_scenario_is_input_error() {
    let out = bin()
        .args(["solve", "--scenario", "nonexistent"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"x\"\n[time]\ndt = 0.1\n").unwrap();
    let out = bin()
        .args(["solve", "--scenario", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_one() {
    let out = bin()
        .args(["solve", "--scenario", "intersection", "--max-iters", "1", "--tol", "1e-12"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn montecarlo_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .args([
                "montecarlo",
                "--scenario",
                "hallway",
                "--samples",
                "4",
                "--seed",
                "99",
                "--out",
                dir.path().to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read_to_string(dir.path().join("montecarlo.json")).unwrap()
    };
    assert_eq!(run(), run());
}
