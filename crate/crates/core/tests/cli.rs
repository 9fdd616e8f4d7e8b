use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stmmc");

fn stmmc(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 8×8 grid, two domains; small enough to train in well under a second.
fn simulate_small(dir: &Path) {
    let out = stmmc(&[
        "simulate", "--out-dir", s(dir), "--rows", "8", "--cols", "8", "--n-domains", "2", "--n-genes", "20",
        "--markers-per-domain", "5", "--image-dim", "4", "--seed", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn run_small(dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    let mut args = vec!["run", "--config", s(&cfg), "--epochs", "15", "--b-smooth", "8"];
    args.extend_from_slice(extra);
    stmmc(&args)
}

#[test]
fn simulate_writes_dataset_and_config() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    for f in ["expression.csv", "coords.csv", "features.csv", "labels.csv", "run.cfg"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let labels = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 65);
}

#[test]
fn run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    let out = run_small(dir.path(), &["--no-image", "--checkpoint"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["labels.csv", "history.csv", "reconstruction.csv", "checkpoint.txt", "manifest.cfg"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let labels = fs::read_to_string(run.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().next(), Some("spot_id,label"));
    assert_eq!(labels.lines().count(), 65);
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 16);
    let manifest = fs::read_to_string(run.join("manifest.cfg")).unwrap();
    assert!(manifest.lines().any(|l| l.replace(' ', "") == "use_image_modality=false"), "{manifest}");
    assert!(manifest.lines().any(|l| l.replace(' ', "") == "epochs=15"), "{manifest}");
}

#[test]
fn missing_coordinates_fail_with_path() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    fs::remove_file(dir.path().join("coords.csv")).unwrap();
    let out = run_small(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("coords.csv"), "{err}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn bad_config_and_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "expression = e.csv\nwhat = 1\n").unwrap();
    assert_eq!(stmmc(&["run", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(stmmc(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(stmmc(&["run"]).status.code(), Some(2));
    let out = Command::new(BIN)
        .args(["evaluate", "--pred", "a", "--truth", "b"])
        .env("STMMC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_identical_and_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    let truth = dir.path().join("labels.csv");
    let report = dir.path().join("m.csv");
    let out = stmmc(&["evaluate", "--pred", s(&truth), "--truth", s(&truth), "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&report).unwrap(), "metric,value\nari,1\nnmi,1\n");

    let other = dir.path().join("other.csv");
    fs::write(&other, "spot_id,label\nx1,0\nx2,1\n").unwrap();
    let out = stmmc(&["evaluate", "--pred", s(&other), "--truth", s(&truth)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn plot_draws_every_spot() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    let svg = dir.path().join("map.svg");
    let out = stmmc(&[
        "plot", "--labels", s(&dir.path().join("labels.csv")), "--coords", s(&dir.path().join("coords.csv")),
        "--out", s(&svg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<circle").count(), 64);
    assert_eq!(text.matches(r#"class="legend-entry""#).count(), 2);
}

#[test]
fn seeded_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_small(dir.path(), &["--seed", "5", "--out-dir", s(&a)]).status.success());
    assert!(run_small(dir.path(), &["--seed", "5", "--out-dir", s(&b)]).status.success());
    for f in ["labels.csv", "history.csv", "reconstruction.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}
