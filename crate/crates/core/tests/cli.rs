use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gean::config::RunConfig;

const TINY: &str = r#"
[data]
n_traj = 8
duration = 0.5
test_n_traj = 4

[gean]
hidden_width = 8
epochs = 2
learning_rate = 1e-3
ensemble_size = 2
batch_size = 64

[eval]
horizons = [1, 50]
bootstrap_resamples = 200
ablation_seeds = [0, 1]
history_lengths = [1, 2]

[io]
out_dir = "runs"
"#;

fn gean(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gean"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gean(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs every subcommand on the tiny config inside `dir`.
fn pipeline(dir: &Path) {
    fs::write(dir.join("tiny.toml"), TINY).unwrap();
    let c = ["--config", "tiny.toml"];
    let with = |rest: &[&'static str]| -> Vec<&str> { c.iter().copied().chain(rest.iter().copied()).collect() };
    let out = ok(dir, &with(&["gen-data"]));
    assert!(out.contains("seed: 1"));
    ok(dir, &with(&["gen-data", "--split", "test"]));
    assert!(ok(dir, &with(&["train", "--data", "runs/train.dataset"])).contains("seed: 0"));
    ok(
        dir,
        &with(&[
            "eval",
            "--model",
            "runs/train/model.gean",
            "--test-data",
            "runs/test.dataset",
            "--svg",
        ]),
    );
    ok(
        dir,
        &with(&[
            "ablate",
            "--axis",
            "history",
            "--data",
            "runs/train.dataset",
            "--test-data",
            "runs/test.dataset",
        ]),
    );
    ok(
        dir,
        &with(&[
            "env-run",
            "--ensemble",
            "runs/train/ensemble.gean",
            "--episodes",
            "2",
            "--horizon",
            "2",
            "--candidates",
            "4",
        ]),
    );
}

fn csv_files(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read_to_string(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_pipeline_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let runs = a.path().join("runs");
    for f in [
        "train.dataset",
        "test.dataset.manifest.json",
        "train/curve_1.csv",
        "train/ensemble.gean",
        "eval/report.csv",
        "eval/report_h50.svg",
        "ablate/ablation_history.csv",
        "env/episode_001.csv",
        "env/summary.json",
    ] {
        assert!(runs.join(f).is_file(), "missing {f}");
    }
    let (ca, cb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(ca.len(), 6);
    assert_eq!(ca, cb);
    assert_eq!(
        fs::read(runs.join("train/ensemble.gean")).unwrap(),
        fs::read(b.path().join("runs/train/ensemble.gean")).unwrap()
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs.join("eval/manifest.json")).unwrap()).unwrap();
    let cfg = RunConfig::load(a.path().join("tiny.toml")).unwrap();
    assert_eq!(manifest["config_hash"], cfg.hash());
    assert_eq!(manifest["command"], "eval");
    assert_eq!(manifest["outputs"][0], "report.csv");

    let ablation = fs::read_to_string(runs.join("ablate/ablation_history.csv")).unwrap();
    assert!(ablation.starts_with("history_length,history_stride,seed,metric,provider,"));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gean(dir.path(), &["train"]).status.code(), Some(2));
    assert_eq!(gean(dir.path(), &["bogus"]).status.code(), Some(2));
    assert_eq!(gean(dir.path(), &["eval", "--test-data", "x"]).status.code(), Some(2));
    assert_eq!(gean(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_and_file_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[gean]\nwidth = 3\n").unwrap();
    let out = gean(dir.path(), &["--config", "bad.toml", "gen-data"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    fs::write(dir.path().join("zero.toml"), "[gean]\nepochs = 1\nensemble_size = 0\n").unwrap();
    assert_eq!(
        gean(dir.path(), &["--config", "zero.toml", "train", "--data", "x"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        gean(dir.path(), &["--config", "missing.toml", "gen-data"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        gean(dir.path(), &["train", "--data", "missing.dataset"]).status.code(),
        Some(4)
    );
}

#[test]
fn config_hash_tracks_content() {
    let a = RunConfig::desk();
    let mut b = RunConfig::desk();
    assert_eq!(a.hash(), b.hash());
    b.gean.seed = 9;
    assert_ne!(a.hash(), b.hash());
    let parsed = RunConfig::from_toml(&a.to_toml(), ".").unwrap();
    assert_eq!(parsed.hash(), a.hash());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = RunConfig::load(dir.join("desk.toml")).unwrap();
    assert_eq!(desk.hash(), RunConfig::desk().hash());
    RunConfig::load(dir.join("tiny.toml")).unwrap();
}
