use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn optimev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optimev")).args(args).output().expect("binary runs")
}

fn fixture(dir: &Path) {
    let out = optimev(&["fixture", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn config(dir: &Path) -> String {
    dir.join("config.toml").to_str().unwrap().to_string()
}

#[test]
fn pipeline_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = optimev(&["-c", &config(dir.path()), "-w", "2", "pipeline"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["bots.json", "classified.jsonl", "metrics/daily_gas.csv", "clone_clusters.json", "regression_results.json"] {
        assert!(dir.path().join("out/base").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn single_stages_in_order() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let cfg = config(dir.path());
    for stage in ["detect", "validate", "classify", "metrics", "similarity", "regress"] {
        let out = optimev(&["-c", &cfg, stage]);
        assert_eq!(out.status.code(), Some(0), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    fs::remove_file(dir.path().join("arbitrum/swaps.jsonl")).unwrap();
    let out = optimev(&["-c", &config(dir.path()), "pipeline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("swaps.jsonl"));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = optimev(&["-c", &config(dir.path()), "detect"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let path = dir.path().join("config.toml");
    let text = fs::read_to_string(&path).unwrap().replace("gas_coverage = 0.8", "gas_coverage = 2.0");
    assert!(text.contains("gas_coverage = 2.0"));
    fs::write(&path, text).unwrap();
    let out = optimev(&["-c", path.to_str().unwrap(), "pipeline"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let cfg = config(dir.path());
    let read = || {
        let mut files = Vec::new();
        for chain in ["ethereum", "arbitrum", "base", "optimism"] {
            for f in ["candidates.json", "validation_report.csv", "classified.jsonl", "metrics/daily_gas.csv", "regression_results.json"] {
                files.push(fs::read(dir.path().join("out").join(chain).join(f)).unwrap());
            }
        }
        files
    };
    assert!(optimev(&["-c", &cfg, "-w", "1", "pipeline"]).status.success());
    let first = read();
    assert!(optimev(&["-c", &cfg, "-w", "3", "pipeline"]).status.success());
    assert_eq!(first, read());
}
