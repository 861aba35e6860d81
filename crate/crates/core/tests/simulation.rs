//! Simulated worker populations: determinism, identities and the voting
//! recall trend.

use rulesmith_core::eval::shipped_gold;
use rulesmith_core::fixtures;
use rulesmith_core::rule::encode_rule;
use rulesmith_core::sim::{
    run_experiment, sample_submissions, ExperimentConfig, WorkerErrorModel, CROWD_ONLY, SINGLE, VOTING,
};

fn drop_model(p: f64) -> WorkerErrorModel {
    WorkerErrorModel { p_drop_sensor: p, p_drop_effector: p, ..WorkerErrorModel::perfect(42) }
}

#[test]
fn zero_error_scores_are_all_one() {
    let c = fixtures::default_catalog();
    let gold = shipped_gold(&c);
    let cfg = ExperimentConfig { n_workers: 3, trials: 5, threshold: 2 };
    let report = run_experiment(&gold, &WorkerErrorModel::perfect(1), &cfg, &c).unwrap();
    for s in &report.scenarios {
        for g in &s.conditions {
            assert_eq!((g.avg_f1, g.avg_attr_accuracy, g.perfect_rate), (1.0, 1.0, 1.0), "{} {}", s.scenario_id, g.group);
        }
    }
}

#[test]
fn one_worker_voting_equals_single() {
    let c = fixtures::default_catalog();
    let gold = shipped_gold(&c);
    let cfg = ExperimentConfig { n_workers: 1, trials: 200, threshold: 2 };
    let report = run_experiment(&gold, &WorkerErrorModel::default(), &cfg, &c).unwrap();
    for s in &report.scenarios {
        let single = s.condition(SINGLE).unwrap();
        let voting = s.condition(VOTING).unwrap();
        let pick = s.condition(CROWD_ONLY).unwrap();
        for (a, b) in [(single, voting), (single, pick)] {
            assert!((a.if_recall - b.if_recall).abs() < 1e-12, "{}", s.scenario_id);
            assert!((a.avg_f1 - b.avg_f1).abs() < 1e-12, "{}", s.scenario_id);
            assert!((a.avg_attr_accuracy - b.avg_attr_accuracy).abs() < 1e-12, "{}", s.scenario_id);
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let c = fixtures::default_catalog();
    let gold = shipped_gold(&c);
    let cfg = ExperimentConfig { n_workers: 10, trials: 50, threshold: 2 };
    let a = serde_json::to_string(&run_experiment(&gold, &WorkerErrorModel::default(), &cfg, &c).unwrap()).unwrap();
    let b = serde_json::to_string(&run_experiment(&gold, &WorkerErrorModel::default(), &cfg, &c).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn voting_recall_beats_single_for_symmetric_drops() {
    let c = fixtures::default_catalog();
    let gold = shipped_gold(&c);
    let cfg = ExperimentConfig { n_workers: 10, trials: 300, threshold: 2 };
    for p in [0.1, 0.2, 0.3] {
        let report = run_experiment(&gold, &drop_model(p), &cfg, &c).unwrap();
        for s in &report.scenarios {
            let single = s.condition(SINGLE).unwrap();
            let voting = s.condition(VOTING).unwrap();
            assert!(voting.if_recall >= single.if_recall, "p={p} {}", s.scenario_id);
            assert!(voting.then_recall >= single.then_recall, "p={p} {}", s.scenario_id);
        }
    }
}

#[test]
fn seeded_s3_crowd_matches_golden_file() {
    let c = fixtures::default_catalog();
    let gold = &shipped_gold(&c)[2];
    let subs = sample_submissions(&gold.variants[0], &WorkerErrorModel::default(), &c, 10, 2, 0);
    let docs: Vec<_> = subs.iter().map(|s| encode_rule(&s.rule)).collect();
    let got = serde_json::to_string_pretty(&docs).unwrap() + "\n";
    let path = fixtures::root().join("sim/s3-seed42-trial0.json");
    if std::env::var_os("RULESMITH_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(got, want);
    let corrupted = subs.iter().filter(|s| !s.rule.canonically_eq(&gold.variants[0])).count();
    assert!(corrupted > 0);
}
