use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn swvmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swvmd")).args(args).output().expect("spawn swvmd")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// A small trend-cycle input plus a config that trains in a few seconds.
fn fixture(dir: &Path) -> PathBuf {
    let input = dir.join("input.csv");
    ok(swvmd(&["synth", "--kind", "trend-cycle", "--length", "180", "--seed", "4", "-o", p(&input)]));
    let config = dir.join("config.json");
    let json = format!(
        r#"{{
  "input": {input:?},
  "preset": "price",
  "swvmd": {{ "window": 16, "k": 3, "lookback": 4 }},
  "vmd": {{ "max_iter": 80 }},
  "network": {{ "layers": 1, "hidden": 4 }},
  "train": {{ "max_epochs": 5, "batch": 32, "patience": 3 }},
  "split": {{ "test_len": 20, "val_len": 20 }},
  "seed": 11
}}"#,
        input = p(&input)
    );
    std::fs::write(&config, json).unwrap();
    config
}

fn artifacts(run_dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(run_dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["artifacts"].clone()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for f in [&a, &b] {
        ok(swvmd(&["synth", "--kind", "two-tone", "--length", "1024", "--seed", "7", "-o", p(f)]));
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    assert!(x.starts_with(b"date,close\n"));
    assert_eq!(x.iter().filter(|c| **c == b'\n').count(), 1025);
}

#[test]
fn unknown_synth_kind_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = swvmd(&["synth", "--kind", "sawtooth", "-o", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_usage_error_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = swvmd(&["run", "--input", p(&dir.path().join("nope.csv")), "-o", p(&run_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    assert!(!run_dir.exists());
}

#[test]
fn bad_rows_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "date,close\n2020-01-01,100\n2020-01-02,0\n").unwrap();
    let out = swvmd(&["ingest", "--input", p(&input), "-o", p(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn chained_stages_match_run_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let (whole, chained) = (dir.path().join("whole"), dir.path().join("chained"));
    ok(swvmd(&["run", "-c", p(&config), "-o", p(&whole)]));
    for stage in ["ingest", "diagnose", "decompose", "build-dataset", "train", "evaluate"] {
        ok(swvmd(&[stage, "-c", p(&config), "-o", p(&chained)]));
    }
    let a = artifacts(&whole);
    assert!(a.as_object().unwrap().len() >= 20, "{a}");
    assert_eq!(a, artifacts(&chained));
}

#[test]
fn rerun_from_manifest_reproduces_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let first = dir.path().join("first");
    ok(swvmd(&["run", "-c", p(&config), "-o", p(&first)]));
    let again = dir.path().join("again");
    let out = ok(swvmd(&["run", "--manifest", p(&first.join("manifest.json")), "-o", p(&again)]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rerun matches"));
    assert_eq!(artifacts(&first), artifacts(&again));
}

#[test]
fn worker_pool_size_does_not_change_features() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let mut outputs = Vec::new();
    for (name, workers) in [("one", "1"), ("three", "3")] {
        let run_dir = dir.path().join(name);
        ok(swvmd(&["ingest", "-c", p(&config), "-o", p(&run_dir)]));
        let out = Command::new(env!("CARGO_BIN_EXE_swvmd"))
            .args(["decompose", "-c", p(&config), "-o", p(&run_dir)])
            .env("SWVMD_WORKERS", workers)
            .output()
            .unwrap();
        ok(out);
        outputs.push(std::fs::read(run_dir.join("features.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let out = Command::new(env!("CARGO_BIN_EXE_swvmd"))
        .args(["decompose", "-c", p(&config), "-o", p(&dir.path().join("one"))])
        .env("SWVMD_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
