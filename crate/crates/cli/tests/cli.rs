use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spoofsim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_config(dir: &Path, source: &str, duration: f64) -> PathBuf {
    let text = std::fs::read_to_string(configs().join(source)).unwrap();
    let mut cfg: toml::Table = text.parse().unwrap();
    cfg.insert("duration".into(), toml::Value::Float(duration));
    let path = dir.join(source);
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn run_writes_log_summary_and_capture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "e3_feedback.toml", 10.0);
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["epochs"], 51);

    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for ext in ["csv", "summary.json", "capture.bin"] {
        assert!(
            names.iter().any(|n| n.ends_with(ext)),
            "missing *.{ext} in {names:?}"
        );
    }
}

#[test]
fn metrics_and_replay_read_back_run_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "e2_imu_only.toml", 6.0);
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let from_run: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();

    let csv = out.join("e2_imu_only.csv");
    let m = run(&["metrics", "--log", csv.to_str().unwrap()]);
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    let from_csv: serde_json::Value = serde_json::from_str(&stdout(&m)).unwrap();
    assert_eq!(from_run["epochs"], from_csv["epochs"]);
    let a = from_run["max_test_ratio"].as_f64().unwrap();
    let b = from_csv["max_test_ratio"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));

    let cap = out.join("e2_imu_only.capture.bin");
    let r = run(&["replay", "--capture", cap.to_str().unwrap()]);
    assert!(r.status.success());
    let text = stdout(&r);
    // header plus one frame per epoch
    assert_eq!(text.lines().count(), 1 + 31);
    assert!(text.lines().nth(1).unwrap().starts_with("0,0,50000,"));
}

#[test]
fn replay_reports_corrupted_capture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "e2_imu_only.toml", 2.0);
    let out = dir.path().join("out");
    assert!(run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let cap = out.join("e2_imu_only.capture.bin");
    let mut bytes = std::fs::read(&cap).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xFF;
    std::fs::write(&cap, bytes).unwrap();

    let r = run(&["replay", "--capture", cap.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains("record"));
}

#[test]
fn suite_prints_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("suite.toml")).unwrap();
    let mut suite: toml::Table = text.parse().unwrap();
    suite["base"]
        .as_table_mut()
        .unwrap()
        .insert("duration".into(), toml::Value::Float(5.0));
    let path = dir.path().join("suite.toml");
    std::fs::write(&path, toml::to_string(&suite).unwrap()).unwrap();
    let out = dir.path().join("out");

    let o = run(&[
        "suite",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("fixed") && lines[1].contains("undefined"));
    assert!(lines[2].starts_with("imu_only"));
    assert!(lines[3].starts_with("feedback"));

    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("suite.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!(out.join("feedback.csv").exists());
}

#[test]
fn exit_codes_follow_failure_category() {
    let dir = tempfile::tempdir().unwrap();

    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["run"]).status.code(), Some(2));

    let missing = dir.path().join("absent.toml");
    let o = run(&["run", "--config", missing.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(4));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\nduration = \"long\"\n").unwrap();
    let o = run(&["run", "--config", bad.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(3));

    let cfg = short_config(dir.path(), "e1_fixed.toml", 1.0);
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "no output directory anywhere");

    let csv = dir.path().join("broken.csv");
    std::fs::write(&csv, "t,not_a_column\n1,2\n").unwrap();
    assert_eq!(
        run(&["metrics", "--log", csv.to_str().unwrap()])
            .status
            .code(),
        Some(4)
    );
}
