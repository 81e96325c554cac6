//! CLI behavior: verbs, flags, exit codes, artifacts, determinism.

use std::fs;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_morseflow");

fn write_config(dir: &std::path::Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const TORUS: &str = r#"{
    "morseflow_schema": 1,
    "manifold": { "catalog": { "torus": { "big_r": 2.0, "small_r": 1.0 } } },
    "function": "x3 + 0.05 * x1",
    "checks": ["classical_complex"]
}"#;

#[test]
fn run_writes_report_and_flowlines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "torus.json", TORUS);
    let out_dir = tmp.path().join("out");
    let status = Command::new(BIN)
        .args(["run"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--export-flowlines")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["morseflow_schema"], 1);
    assert_eq!(report["critical_points"].as_array().unwrap().len(), 4);
    assert_eq!(report["summary"]["all_passed"], true);

    let csv = fs::read_to_string(out_dir.join("flowlines.csv")).unwrap();
    assert!(csv.starts_with("run_id,orbit_id,t_index,x1,x2,x3\n"));
    assert!(csv.lines().count() > 10);
}

#[test]
fn check_runs_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "obstr.json",
        r#"{
            "morseflow_schema": 1,
            "checks": ["obstructions"],
            "obstruction_queries": [ { "k": 2, "delta": [0], "delta_prime": [1] } ]
        }"#,
    );
    let out = Command::new(BIN).args(["check"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "verdict delivery is success");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Obstructed"));
    // no report written anywhere in the temp dir
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn tables_prints_stems() {
    let out = Command::new(BIN).arg("tables").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Z/24"));
    assert!(text.contains("Z/240"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    // unparseable function
    let bad = write_config(
        tmp.path(),
        "bad.json",
        r#"{
            "morseflow_schema": 1,
            "manifold": { "catalog": { "sphere": 2 } },
            "function": "x1 + + x2",
            "checks": ["classical_complex"]
        }"#,
    );
    let status = Command::new(BIN).args(["check"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // missing file
    let status = Command::new(BIN)
        .args(["check", "/nonexistent/config.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn degenerate_function_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "degen.json",
        r#"{
            "morseflow_schema": 1,
            "manifold": { "catalog": { "sphere": 2 } },
            "function": "x3^2",
            "checks": ["classical_complex"]
        }"#,
    );
    let out = Command::new(BIN).args(["check"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("degenerate"));
}

#[test]
fn seed_override_and_byte_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "torus.json", TORUS);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    for (dir, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let status = Command::new(BIN)
            .args(["run"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(dir)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    let rb = fs::read(b.join("report.json")).unwrap();
    let rc = fs::read_to_string(c.join("report.json")).unwrap();
    assert_eq!(ra, rb, "same seed must be byte-identical");
    let parsed: serde_json::Value = serde_json::from_str(&rc).unwrap();
    assert_eq!(parsed["seed"], 4, "seed flag overrides the config");
}
