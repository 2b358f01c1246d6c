use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/configs/{name}.json"))
}

fn rta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rta"))
        .args(args)
        .env_remove("RTA_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn safe_run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rta(&[
        "run",
        config("surveillance").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("DecisionModule1: AC -> SC[wall]"));
    assert!(text.contains("0 violation(s)"));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["schema_version"], 1);
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert!(trace.lines().next().unwrap().starts_with("{\"manifest\":"));
}

#[test]
fn violations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = rta(&[
        "run",
        config("surveillance").to_str().unwrap(),
        "--rta",
        "off",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("violation wall-strike"));
}

#[test]
fn replay_round_trip_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let o = rta(&[
        "run",
        config("delivery").to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let trace = dir.path().join("trace.jsonl");
    let o = rta(&["replay", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("identical"));

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(lines.len() - 3);
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let o = rta(&["replay", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("diverged at record"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rta"))
        .args([
            "run",
            config("delivery").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("RTA_SEED", "4242")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let head = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(head.lines().next().unwrap()).unwrap();
    assert_eq!(manifest["manifest"]["seed"], 4242);
}

#[test]
fn sweep_prints_one_row_per_delta() {
    let o = rta(&[
        "sweep",
        config("surveillance").to_str().unwrap(),
        "--delta",
        "1..3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].contains("min_wall_distance"));
    for (row, d) in rows[1..].iter().zip(1..) {
        assert_eq!(row.split_whitespace().next(), Some(d.to_string().as_str()));
    }
}

#[test]
fn metrics_subcommand_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    rta(&[
        "run",
        config("surveillance").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let o = rta(&["metrics", dir.path().join("trace.jsonl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(m["violations"], saved["violations"]);
    assert_eq!(m["sc_activations"], saved["sc_activations"]);
    assert_eq!(m["robots"], saved["robots"]);
}

#[test]
fn errors_exit_with_one() {
    assert_eq!(rta(&["run", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(rta(&["bogus"]).status.code(), Some(1));
    assert_eq!(
        rta(&[
            "sweep",
            config("surveillance").to_str().unwrap(),
            "--delta",
            "0"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        rta(&["replay", "/nonexistent.jsonl"]).status.code(),
        Some(1)
    );
    assert_eq!(rta(&["--help"]).status.code(), Some(0));
}
