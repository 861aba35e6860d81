//! Exhaustive agreement between `merge_rules` and a brute-force tally over
//! every small session on the mini catalog.

use std::collections::BTreeMap;
use std::time::Instant;

use rulesmith_core::fixtures;
use rulesmith_core::merge::{merge_rules, MergeConfig, Submission};
use rulesmith_core::time::epoch;

#[path = "support/merge_oracle.rs"]
mod support;

use support::side_rule;

#[test]
fn merge_matches_brute_force_tally() {
    let started = Instant::now();
    let (cases, bad) = support::exhaustive(&fixtures::mini_catalog());
    let elapsed = started.elapsed();
    assert!(bad.is_empty(), "{} of {cases} sessions disagree, first {:#?}", bad.len(), bad[0]);
    println!("merge oracle: {cases} sessions agree in {elapsed:?}");
    assert!(elapsed.as_secs() < 30);
}
#[test]
fn winning_value_keeps_first_spelling() {
    let c = fixtures::mini_catalog();
    let rules = [side_rule(&c, 3, 0), side_rule(&c, 3, 0)];
    let subs: Vec<Submission> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| Submission { worker_id: format!("w{i}"), rule: r.clone(), submitted_at: epoch() })
        .collect();
    let trace = merge_rules(&subs, &MergeConfig::default(), &c).unwrap();
    let spelled: BTreeMap<_, _> = trace.rule.ifs[0].bindings.iter().map(|b| (b.attr_id.clone(), b.value.clone())).collect();
    assert_eq!(spelled["if-alpha-level-value"], "Y");
}
