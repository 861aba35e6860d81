//! Reference documents, the default catalog and the gold scenarios.

use rulesmith_core::eval::{attribute_accuracy, score_rule, selection_scores, shipped_gold};
use rulesmith_core::fixtures;
use rulesmith_core::rule::{decode_clause, decode_rule_str, encode_clause, encode_rule};
use rulesmith_core::time::parse_timestamp;
use rulesmith_core::validator::{validate_clause, validate_rule};
use rulesmith_core::{Clause, ClauseKind};
use serde_json::Value;

fn at() -> rulesmith_core::time::Timestamp {
    parse_timestamp("2018-01-01T00:00:00").unwrap()
}

#[test]
fn clause_listings_round_trip() {
    let c = fixtures::default_catalog();
    for (text, kind) in [(fixtures::LISTING_WEATHER, ClauseKind::Sensor), (fixtures::LISTING_ALARM, ClauseKind::Effector)] {
        let doc: Value = serde_json::from_str(text).unwrap();
        let clause = decode_clause(&doc, kind, &c, kind.side()).unwrap();
        assert!(validate_clause(&clause, &c, at()).ok);
        assert_eq!(serde_json::to_value(encode_clause(&clause)).unwrap(), doc);
    }
}

#[test]
fn rule_listing_round_trips() {
    let c = fixtures::default_catalog();
    let doc: Value = serde_json::from_str(fixtures::LISTING_RULE).unwrap();
    let rule = decode_rule_str(fixtures::LISTING_RULE, &c).unwrap();
    assert!(validate_rule(&rule, &c, at()).ok);
    assert_eq!(encode_rule(&rule).to_value(), doc);
}

#[test]
fn catalog_rows() {
    let c = fixtures::default_catalog();
    let triggers: Vec<(&str, usize)> = c.sensors.iter().map(|s| (s.label.as_str(), s.triggers.len())).collect();
    assert_eq!(triggers.len(), 10);
    for (label, n) in &triggers {
        let want = match *label {
            "Bus" => 2,
            "Calendar" => 3,
            "GPS" => 2,
            "Phone Body" => 2,
            _ => 1,
        };
        assert_eq!(*n, want, "{label}");
    }
    assert_eq!(c.effectors.len(), 6);
    assert!(c.effectors.iter().all(|e| e.actions.len() == 1));
    assert!((c.mean_triggers_per_sensor() - 1.5).abs() <= 0.01);
}

#[test]
fn gold_rules_score_perfectly_against_themselves() {
    let c = fixtures::default_catalog();
    for g in shipped_gold(&c) {
        let row = score_rule(&g.variants[0], &g, &c, "gold");
        assert_eq!(row.selection.ifs.precision, 1.0, "{}", g.scenario_id);
        assert_eq!(row.selection.ifs.recall, 1.0, "{}", g.scenario_id);
        assert_eq!(row.selection.thens.f1, 1.0, "{}", g.scenario_id);
        assert_eq!(row.avg_attr_accuracy, 1.0, "{}", g.scenario_id);
        assert!(row.perfect);
    }
}

#[test]
fn cited_error_cases() {
    let c = fixtures::default_catalog();
    let s3 = &shipped_gold(&c)[2];
    let gold = &s3.variants[0];

    let gold_cal = &gold.ifs[1];
    let current = Clause::bind(&c, ClauseKind::Sensor, "if-calendar", "if-calendar-current", &[("if-calendar-current-type", "Meeting")]).unwrap();
    assert_eq!(attribute_accuracy(&current, gold_cal, &c, &s3.synonyms), 0.0);

    let mut alarm = gold.thens[0].clone();
    alarm.set_value("then-alarm-send-time", "19:00");
    assert!((attribute_accuracy(&alarm, &gold.thens[0], &c, &s3.synonyms) - 0.5).abs() < 1e-9);

    let mut weather_only = gold.clone();
    weather_only.ifs.truncate(1);
    assert!((selection_scores(&weather_only, gold).ifs.recall - 0.5).abs() < 1e-9);
}
