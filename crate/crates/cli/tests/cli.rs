use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tvgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvgraph")).args(args).output().unwrap()
}

fn simulate(dir: &Path) {
    let out = tvgraph(&["simulate", "--seed", "1", "--p", "15", "--steps", "60", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let out = tvgraph(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = tvgraph(&["estimate", "--lambda", "-1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = tvgraph(&["estimate", "--data", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn large_penalty_gives_no_edges() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let data = dir.path().join("data.csv");
    let out = tvgraph(&["estimate", "--data", data.to_str().unwrap(), "--lambda", "100", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let edges = fs::read_to_string(dir.path().join("edges.csv")).unwrap();
    assert_eq!(edges.trim(), "i,j,theta_ij");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("precision.json")).unwrap()).unwrap();
    assert_eq!(doc["meta"]["edge_count"], 0);
    assert_eq!(doc["meta"]["converged"], true);
}

#[test]
fn stride_equal_to_steps_evaluates_once() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let d = dir.path();
    let out = tvgraph(&[
        "track",
        "--data",
        d.join("data.csv").to_str().unwrap(),
        "--truth",
        d.join("trajectory.jsonl").to_str().unwrap(),
        "--stride",
        "60",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("track_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["evaluations"], 1);
}

#[test]
fn mgf_at_zero_and_constant_bias() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("mgf.json");
    fs::write(&cfg, r#"{"t_values": [0.0], "draws": 1000}"#).unwrap();
    let out = tvgraph(&["devlab", "mgf", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(d.join("mgf.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "1");
    assert_eq!(row[2], "1");

    // Default bias config is a constant identity curve.
    let out = tvgraph(&["devlab", "bias", "--out", d.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(d.join("bias.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let bias: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(bias.abs() <= 1e-10, "{line}");
    }
}
