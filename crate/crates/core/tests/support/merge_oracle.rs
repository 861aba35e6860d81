//! Brute-force merge oracle over the mini catalog, shared by the core tests
//! and the acceptance target.

use chrono::Duration;
use rulesmith_core::catalog::Catalog;
use rulesmith_core::merge::{merge_rules, MergeConfig, MergeError, Submission};
use rulesmith_core::time::epoch;
use rulesmith_core::{Clause, ClauseKind, Rule};

/// One side of a rule: per owner, `None` = not chosen, otherwise the
/// condition and an optional attribute value.
type Pick = Option<(&'static str, Option<&'static str>)>;

const ALPHA: [Pick; 4] = [
    None,
    Some(("if-alpha-level", None)),
    Some(("if-alpha-level", Some("x"))),
    Some(("if-alpha-level", Some("Y "))),
];
const BETA: [Pick; 3] = [None, Some(("if-beta-one", None)), Some(("if-beta-two", None))];
const GPS: [Pick; 3] = [None, Some(("then-gps-on", None)), Some(("then-gps-off", None))];
const PING: [Pick; 4] = [
    None,
    Some(("then-ping-send", None)),
    Some(("then-ping-send", Some("X"))),
    Some(("then-ping-send", Some("y"))),
];

fn attr_of(condition: &str) -> &'static str {
    match condition {
        "if-alpha-level" => "if-alpha-level-value",
        "then-ping-send" => "then-ping-send-msg",
        _ => "",
    }
}

fn clause(c: &Catalog, kind: ClauseKind, owner: &str, pick: Pick) -> Option<Clause> {
    let (cond, value) = pick?;
    let values: Vec<(&str, &str)> = value.map(|v| (attr_of(cond), v)).into_iter().collect();
    Some(Clause::bind(c, kind, owner, cond, &values).unwrap())
}

/// Universe index -> rule. IF side 12 configurations, THEN side 12.
pub fn side_rule(c: &Catalog, if_ix: usize, then_ix: usize) -> Rule {
    let ifs = [
        clause(c, ClauseKind::Sensor, "if-alpha", ALPHA[if_ix % 4]),
        clause(c, ClauseKind::Sensor, "if-beta", BETA[if_ix / 4]),
    ];
    let thens = [
        clause(c, ClauseKind::Effector, "then-gps", GPS[then_ix / 4]),
        clause(c, ClauseKind::Effector, "then-ping", PING[then_ix % 4]),
    ];
    Rule::new(ifs.into_iter().flatten().collect(), thens.into_iter().flatten().collect())
}

/// (kind, owner, condition, attribute value) with values lowercased and
/// trimmed; blank values omitted.
type Flat = Vec<(ClauseKind, String, String, Option<String>)>;

fn flatten(rule: &Rule) -> Flat {
    let mut out: Flat = rule
        .ifs
        .iter()
        .chain(&rule.thens)
        .map(|c| {
            let v = c.bindings.iter().map(|b| b.value.trim().to_lowercase()).find(|v| !v.is_empty());
            (c.kind, c.owner_id.clone(), c.condition_id.clone(), v)
        })
        .collect();
    out.sort();
    out
}

/// Plurality with ties to the lowest index of first appearance.
fn plurality<T: Clone + Eq>(votes: &[T]) -> Option<T> {
    let mut best: Option<(usize, usize, T)> = None;
    for (i, v) in votes.iter().enumerate() {
        if votes[..i].contains(v) {
            continue;
        }
        let n = votes.iter().filter(|u| *u == v).count();
        if best.as_ref().is_none_or(|(m, _, _)| n > *m) {
            best = Some((n, i, v.clone()));
        }
    }
    best.map(|(_, _, v)| v)
}

/// Independent oracle: submissions are in time order, one per worker.
fn oracle(rules: &[Rule], threshold: usize) -> Option<Flat> {
    let owners = [
        (ClauseKind::Sensor, "if-alpha"),
        (ClauseKind::Sensor, "if-beta"),
        (ClauseKind::Effector, "then-gps"),
        (ClauseKind::Effector, "then-ping"),
    ];
    let mut out: Flat = Vec::new();
    for (kind, owner) in owners {
        let chosen: Vec<&Clause> = rules
            .iter()
            .filter_map(|r| r.clauses(kind).iter().find(|c| c.owner_id == owner))
            .collect();
        if chosen.len() < threshold || chosen.is_empty() {
            continue;
        }
        let conds: Vec<&str> = chosen.iter().map(|c| c.condition_id.as_str()).collect();
        let cond = plurality(&conds).unwrap();
        let attr = attr_of(cond);
        let value = if attr.is_empty() {
            None
        } else {
            let values: Vec<String> = chosen
                .iter()
                .filter(|c| c.condition_id == cond)
                .map(|c| c.value(attr).trim().to_lowercase())
                .collect();
            plurality(&values).filter(|v| !v.is_empty())
        };
        out.push((kind, owner.to_string(), cond.to_string(), value));
    }
    out.sort();
    (!out.is_empty()).then_some(out)
}

/// Whether `merge_rules` agrees with the oracle on one session.
pub fn agrees(c: &Catalog, rules: &[Rule], threshold: usize) -> bool {
    let subs: Vec<Submission> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| Submission {
            worker_id: format!("w{i}"),
            rule: r.clone(),
            submitted_at: epoch() + Duration::seconds(i as i64),
        })
        .collect();
    let cfg = MergeConfig { inclusion_threshold: threshold, ..MergeConfig::default() };
    let got = match merge_rules(&subs, &cfg, c) {
        Ok(trace) => Some(flatten(&trace.rule)),
        Err(MergeError::EmptyFinalRule { .. }) => None,
        Err(e) => panic!("unexpected merge error {e}"),
    };
    got == oracle(rules, threshold)
}

fn sequences(n: usize, base: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..base.pow(n as u32)).map(move |mut k| {
        let mut seq = vec![0; n];
        for slot in seq.iter_mut() {
            *slot = k % base;
            k /= base;
        }
        seq
    })
}

/// Sessions checked and sessions that disagreed, over thresholds 1 to 3:
/// every session of one or two arbitrary rules, and every IF-side and
/// THEN-side sequence of three and four rules with the other side following
/// through a fixed bijection.
pub fn exhaustive(c: &Catalog) -> (usize, Vec<(usize, Vec<Rule>)>) {
    let universe: Vec<Vec<Rule>> = (0..12).map(|i| (0..12).map(|t| side_rule(c, i, t)).collect()).collect();
    let mut cases = 0;
    let mut bad = Vec::new();
    let mut check = |rules: Vec<Rule>, threshold: usize| {
        cases += 1;
        if !agrees(c, &rules, threshold) {
            bad.push((threshold, rules));
        }
    };
    for threshold in 1..=3 {
        for n in 1..=2 {
            for seq in sequences(n, 144) {
                check(seq.iter().map(|k| universe[k / 12][k % 12].clone()).collect(), threshold);
            }
        }
        for n in 3..=4 {
            for seq in sequences(n, 12) {
                check(seq.iter().map(|&k| universe[k][(5 * k + 7) % 12].clone()).collect(), threshold);
                check(seq.iter().map(|&k| universe[(7 * k + 3) % 12][k].clone()).collect(), threshold);
            }
        }
    }
    (cases, bad)
}
