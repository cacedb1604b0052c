use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use optimev_core::config::Config;
use optimev_core::fixture;
use optimev_core::pipeline::{self, PipelineError, Stage};

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn write_fixture(dir: &Path) -> Config {
    fixture::generate(fixture::DEFAULT_SEED).write(dir).unwrap();
    Config::load(&dir.join("config.toml")).unwrap()
}

#[test]
fn stages_run_alone_match_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_fixture(dir.path());
    let whole = dir.path().join("whole");
    let staged = dir.path().join("staged");

    cfg.output_dir = whole.clone();
    pipeline::run_pipeline(&cfg).unwrap();

    cfg.output_dir = staged.clone();
    for stage in Stage::ALL {
        pipeline::run_stage(&cfg, stage).unwrap();
    }
    let (a, b) = (tree(&whole), tree(&staged));
    assert!(a.contains_key(Path::new("base/bots.json")));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(b[k] == *v, "{} differs", k.display());
    }
}

#[test]
fn later_stage_without_earlier_artifacts_reports_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path());
    let err = pipeline::run_stage(&cfg, Stage::Classify).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput { ref path } if path.ends_with("bots.json")), "{err}");
}

#[test]
fn missing_input_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path());
    fs::remove_file(&cfg.chains[0].swaps).unwrap();
    let err = pipeline::run_pipeline(&cfg).unwrap_err();
    assert!(err.is_missing_input(), "{err}");
}

#[test]
fn pipeline_without_optional_inputs_skips_similarity_and_regression() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_fixture(dir.path());
    cfg.ohlc = None;
    for c in &mut cfg.chains {
        c.bytecode = None;
        c.ohlc = None;
    }
    pipeline::run_pipeline(&cfg).unwrap();
    let out = tree(&cfg.output_dir);
    assert!(out.contains_key(Path::new("ethereum/classified.jsonl")));
    assert!(!out.keys().any(|k| k.ends_with(pipeline::SIMILARITY_MATRIX) || k.ends_with(pipeline::REGRESSION_RESULTS)));
    let err = pipeline::run_stage(&cfg, Stage::Similarity).unwrap_err();
    assert!(matches!(err, PipelineError::NotConfigured { what: "bytecode", .. }));
}
