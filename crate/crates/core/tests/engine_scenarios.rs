//! The gold rules driven by their scripted feeds, and the conflict
//! workflow on the duplicate-IF fixture.

use std::path::Path;

use chrono::Duration;
use rulesmith_core::engine::{
    parse_feed, ActionRequest, ConflictKind, Engine, EngineConfig, OutboxFile, Resolution, RuleStatus, SensorSnapshot,
    UserDecision,
};
use rulesmith_core::eval::shipped_gold;
use rulesmith_core::fixtures;
use rulesmith_core::rule::decode_document;
use rulesmith_core::sim::{builtin_script, synth_feed};
use rulesmith_core::time::parse_timestamp;
use rulesmith_core::Rule;
use serde_json::Value;

struct Run {
    outbox: String,
    emitted_per_tick: Vec<usize>,
    feed: Vec<SensorSnapshot>,
}

fn run(rule: &Rule, feed: &[SensorSnapshot], dir: &Path) -> Run {
    let outbox = dir.join("outbox.ndjson");
    let _ = std::fs::remove_file(&outbox);
    let mut engine = Engine::new(fixtures::default_catalog(), EngineConfig::default())
        .with_dispatcher(Box::new(OutboxFile::open(&outbox).unwrap()));
    engine.add_rule(rule.clone(), feed[0].at - Duration::minutes(1)).unwrap();
    let emitted_per_tick = feed.iter().map(|s| engine.tick(s).unwrap().emitted.len()).collect();
    Run { outbox: std::fs::read_to_string(&outbox).unwrap(), emitted_per_tick, feed: feed.to_vec() }
}

fn requests(outbox: &str) -> Vec<ActionRequest> {
    outbox.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn value_of(r: &ActionRequest, attr: &str) -> String {
    r.clause.attributes.iter().find(|a| a.name == attr).map(|a| a.value.clone()).unwrap_or_default()
}

fn scenario(id: &str) -> (Run, Run) {
    let c = fixtures::default_catalog();
    let gold = shipped_gold(&c).into_iter().find(|g| g.scenario_id == id).unwrap();
    let feed = synth_feed(&builtin_script(id).unwrap(), &c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = run(&gold.variants[0], &feed, dir.path());
    let b = run(&gold.variants[0], &feed, dir.path());
    (a, b)
}

/// Exactly one tick fires, and at least one later tick repeats its
/// readings without firing.
fn assert_single_firing(run: &Run) {
    let firing: Vec<usize> = (0..run.emitted_per_tick.len()).filter(|&i| run.emitted_per_tick[i] > 0).collect();
    assert_eq!(firing.len(), 1, "{:?}", run.emitted_per_tick);
    let t = firing[0];
    let replays = run.feed[t + 1..].iter().filter(|s| s.readings == run.feed[t].readings).count();
    assert!(replays > 0, "feed has no refractory replay");
}

fn check(id: &str, expected: &[(&str, &[(&str, &str)])]) -> Vec<ActionRequest> {
    let (a, b) = scenario(id);
    assert_eq!(a.outbox, b.outbox, "{id}: outbox differs between runs");
    assert_single_firing(&a);
    let reqs = requests(&a.outbox);
    assert_eq!(reqs.len(), expected.len(), "{id}: {reqs:#?}");
    for (r, (condition, values)) in reqs.iter().zip(expected) {
        assert_eq!(r.clause.condition, *condition, "{id}");
        for (attr, want) in *values {
            assert_eq!(value_of(r, attr), *want, "{id} {attr}");
        }
    }
    reqs
}

#[test]
fn s1_news_notification() {
    check("S1", &[("then-notification-send", &[("then-notification-send-content", "News of Steelers!")])]);
}

#[test]
fn s2_message_notification() {
    check("S2", &[("then-notification-send", &[])]);
}

#[test]
fn s3_alarm_scheduled_for_next_morning() {
    let reqs = check("S3", &[("then-alarm-send", &[("then-alarm-send-time", "07:00")])]);
    assert_eq!(reqs[0].fire_at, parse_timestamp("2018-01-02T07:00:00").unwrap());
    assert_eq!(reqs[0].dispatched_at, Some(reqs[0].fire_at));
}

#[test]
fn s4_message_to_the_caller() {
    check("S4", &[("then-message-send", &[("then-message-send-to", "Alice"), ("then-message-send-content", "Sorry, I am driving.")])]);
}

#[test]
fn s5_bus_notification() {
    check("S5", &[("then-notification-send", &[])]);
}

#[test]
fn s6_message_and_call() {
    check(
        "S6",
        &[
            ("then-message-send", &[("then-message-send-to", "Amy")]),
            ("then-call-dial", &[("then-call-dial-to", "Ben Flower Shop")]),
        ],
    );
}

#[test]
fn shipped_feeds_match_their_scripts() {
    let c = fixtures::default_catalog();
    for (id, _) in fixtures::FEED_SCRIPTS {
        let feed = synth_feed(&builtin_script(id).unwrap(), &c).unwrap();
        let text: String = feed.iter().map(|s| serde_json::to_string(s).unwrap() + "\n").collect();
        let path = fixtures::root().join(format!("feeds/{}.ndjson", id.to_lowercase()));
        if std::env::var_os("RULESMITH_BLESS").is_some() {
            std::fs::write(&path, &text).unwrap();
        }
        assert_eq!(parse_feed(&std::fs::read_to_string(&path).unwrap()).unwrap(), feed, "{id}");
    }
}

#[test]
fn duplicate_if_workflow() {
    let c = fixtures::default_catalog();
    let root = fixtures::root().join("engine");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(root.join("duplicate-if.json")).unwrap()).unwrap();
    let rules: Vec<Rule> = doc["rules"].as_array().unwrap().iter().map(|r| decode_document(r, &c).unwrap()).collect();
    let feed = parse_feed(&std::fs::read_to_string(root.join("duplicate-if.ndjson")).unwrap()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let outbox = dir.path().join("outbox.ndjson");
    let mut engine = Engine::new(c, EngineConfig::default()).with_dispatcher(Box::new(OutboxFile::open(&outbox).unwrap()));
    let start = feed[0].at - Duration::minutes(1);
    let a = engine.add_rule(rules[0].clone(), start).unwrap().rule_id;
    engine.tick(&feed[0]).unwrap();
    let added = engine.add_rule(rules[1].clone(), feed[0].at).unwrap();
    let b = added.rule_id;

    let findings: Vec<_> = engine.kb().findings.iter().filter(|f| f.kind == ConflictKind::DuplicateThen).collect();
    assert_eq!(findings.len(), 1);
    let finding = findings[0].clone();
    assert_eq!(finding.rule_a, a);
    assert_eq!(finding.rule_b.as_ref(), Some(&b));
    assert_eq!(finding.resolution, Resolution::PendingUserConfirmation);

    let resolved = engine.resolve_conflict(&finding.id, UserDecision::ConfirmSubsume).unwrap();
    assert_eq!(resolved.resolution, Resolution::SubsumedB);
    assert_eq!(engine.kb().status(b.as_str()), Some(RuleStatus::Subsumed));

    for s in &feed[1..] {
        let report = engine.tick(s).unwrap();
        assert!(report.emitted.iter().all(|r| r.rule_id == a));
    }
    let sent = requests(&std::fs::read_to_string(&outbox).unwrap());
    assert!(sent.len() >= 2);
    assert!(sent.iter().all(|r| r.rule_id == a));
    assert_eq!(engine.kb().findings.iter().filter(|f| f.kind == ConflictKind::DuplicateThen).count(), 1);
}
