use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bitalloc::harness::{write_config, ExperimentConfig, Policy};
use bitalloc::quantizer::QuantizerBank;

fn bitalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitalloc")).args(args).output().unwrap()
}

fn small_config(dir: &Path, policy: Policy) -> std::path::PathBuf {
    let cfg = ExperimentConfig {
        trials: 2,
        steps: 3,
        particles: 200,
        policy,
        threshold_samples: 1200,
        ..ExperimentConfig::default()
    };
    let path = dir.join("run.cfg");
    write_config(&cfg, &path).unwrap();
    path
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Policy::Adp);
    let out = dir.path().join("res");
    let o = bitalloc(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--policy",
        "gbfos",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mse.csv", "trials.csv", "summary.csv", "timing.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("gbfos,2,"));
}

#[test]
fn thresholds_bank_is_reusable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Policy::Nearest);
    let bank = dir.path().join("bank.txt");
    let o = bitalloc(&[
        "thresholds",
        "--rates",
        "1..5",
        "--out",
        bank.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(QuantizerBank::load(&bank).unwrap().max_rate(), 5);

    let text = fs::read_to_string(&cfg).unwrap() + &format!("bank_path = {}\n", bank.display());
    fs::write(&cfg, text).unwrap();
    let o = bitalloc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = bitalloc(&["bench-alloc", "--n", "3", "--r", "2", "--instances", "3", "--bank", bank.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_alloc_reports_every_policy() {
    let o = bitalloc(&["bench-alloc", "--n", "3", "--r", "2", "--instances", "4", "--tables", "generic"]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1 + 4 * 5);
    assert!(stdout.lines().skip(1).all(|l| l.split(',').count() == 5));
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    assert_eq!(bitalloc(&["simulate", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    let cfg = small_config(dir.path(), Policy::Adp);
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap() + "mystery = 1\n").unwrap();
    assert_eq!(bitalloc(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(bitalloc(&["thresholds", "--rates", "2..5", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Policy::Exhaustive);
    let text = fs::read_to_string(&cfg).unwrap().replace("exhaustive_cap = 10000000", "exhaustive_cap = 10");
    fs::write(&cfg, text).unwrap();
    let o = bitalloc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
