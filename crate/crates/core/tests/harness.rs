mod common;

use bitalloc::harness::{
    load_config, read_mse_csv, run_experiment_with, run_trial, write_config, write_outputs, ExperimentConfig, Policy,
    Setup,
};

fn quick(policy: Policy) -> ExperimentConfig {
    ExperimentConfig { trials: 3, steps: 4, particles: 200, policy, ..ExperimentConfig::default() }
}

#[test]
fn trial_records_repeat_exactly() {
    let cfg = quick(Policy::Convex);
    let setup = Setup::with_bank(&cfg, common::small_bank(5)).unwrap();
    // wall-clock time is the one field allowed to differ
    let run = || {
        let mut rec = run_trial(&cfg, &setup, 2).unwrap();
        rec.steps.iter_mut().for_each(|s| s.alloc_seconds = 0.0);
        rec
    };
    assert_eq!(run(), run());
}

#[test]
fn policies_share_the_truth_path() {
    let setup_cfg = quick(Policy::Adp);
    let setup = Setup::with_bank(&setup_cfg, common::small_bank(5)).unwrap();
    let a = run_trial(&quick(Policy::Adp), &setup, 1).unwrap();
    let b = run_trial(&quick(Policy::Nearest), &setup, 1).unwrap();
    let truths = |r: &bitalloc::harness::TrialRecord| r.steps.iter().map(|s| s.truth).collect::<Vec<_>>();
    assert_eq!(truths(&a), truths(&b));
}

#[test]
fn outputs_round_trip_through_disk() {
    let cfg = quick(Policy::Gbfos);
    let setup = Setup::with_bank(&cfg, common::small_bank(5)).unwrap();
    let result = run_experiment_with(&cfg, &setup).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&result, dir.path()).unwrap();
    assert_eq!(read_mse_csv(dir.path().join("mse.csv")).unwrap(), result.series);
    for f in ["trials.csv", "summary.csv", "timing.csv"] {
        assert!(dir.path().join(f).exists());
    }
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + cfg.trials * cfg.steps);
}

#[test]
fn config_files_reload_and_reject_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    let cfg = ExperimentConfig { policy: Policy::Greedy, seed: 99, tau: Some(2e-3), ..ExperimentConfig::default() };
    write_config(&cfg, &path).unwrap();
    assert_eq!(load_config(&path).unwrap(), cfg);

    let text = std::fs::read_to_string(&path).unwrap();
    let missing: String = text.lines().filter(|l| !l.starts_with("budget")).map(|l| format!("{l}\n")).collect();
    assert!(ExperimentConfig::from_text(&missing).unwrap_err().is_config());
    let bad = text.replace("policy = greedy", "policy = psychic");
    assert!(ExperimentConfig::from_text(&bad).unwrap_err().is_config());
    let neg = text.replace("trials = 100", "trials = 0");
    assert!(ExperimentConfig::from_text(&neg).unwrap_err().is_config());
}
