use std::fs;

use qfractal::commands::{run, Command};
use qfractal::io::{read_coefficients, RunConfig};
use qfractal::Error;

#[test]
fn build_state_writes_readable_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml("[state]\nkind = \"parabola\"\nn_max = 63\n").unwrap();
    let out = run(Command::BuildState, &cfg, dir.path()).unwrap();
    assert_eq!(out.files, ["coefficients.txt", "state.json"]);
    let terms = read_coefficients(&dir.path().join("coefficients.txt")).unwrap();
    assert_eq!(terms, cfg.build_state().unwrap().terms());
}

#[test]
fn failed_command_still_writes_run_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml("[state]\nkind = \"custom\"\npath = \"/nonexistent/c.txt\"\n").unwrap();
    assert!(matches!(run(Command::Carpet, &cfg, dir.path()), Err(Error::Io { .. })));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(doc["command"], "carpet");
    assert!(doc["status"]["error"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn profile_masks_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml("times = [\"0.3\"]\ngrid_points = 5\n[state]\nkind = \"eigenstate\"\nn = 2\n").unwrap();
    run(Command::Profile, &cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("profile_000.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 5);
    // walls and the centre are nodes of the second mode
    for i in [0, 2, 4] {
        assert_eq!(rows[i][2], "", "row {i}");
        assert!(rows[i][3].ends_with("inf"), "row {i}");
    }
    let q: f64 = rows[1][3].parse().unwrap();
    assert!((q - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-8);
}
