//! Pairwise conflict detection over the knowledge base.

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{KnowledgeBase, RuleStatus, StoredRule};
use crate::catalog::Catalog;
use crate::rule::{ClauseKind, RuleId};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    /// Same IF, overlapping effectors: the same action may run twice.
    DuplicateThen,
    /// THEN actions declared to cancel each other out.
    AntagonisticThen,
    /// No activation within the observation horizon.
    NeverTriggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    PendingUserConfirmation,
    SubsumedB,
    Dismissed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictFinding {
    pub id: String,
    pub kind: ConflictKind,
    pub rule_a: RuleId,
    /// The subsumption candidate; absent for single-rule findings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_b: Option<RuleId>,
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConflictFinding {
    /// The rule that gets subsumed when the user confirms.
    pub fn candidate(&self) -> &RuleId {
        self.rule_b.as_ref().unwrap_or(&self.rule_a)
    }

    pub(crate) fn same_subject(&self, other: &ConflictFinding) -> bool {
        let pair = |f: &ConflictFinding| {
            let mut p = [Some(f.rule_a.clone()), f.rule_b.clone()];
            p.sort();
            p
        };
        self.kind == other.kind && pair(self) == pair(other)
    }
}

fn considered(r: &StoredRule) -> bool {
    !matches!(r.status, RuleStatus::Disabled) && !(r.status == RuleStatus::Subsumed && r.confirmed_subsumed)
}

/// Orders a pair so that `b` is the less relevant rule: fewer activations,
/// and on a tie the one added later.
fn order<'a>(x: &'a StoredRule, y: &'a StoredRule) -> (&'a StoredRule, &'a StoredRule, bool) {
    let tie = x.activations == y.activations;
    let x_less = (x.activations, std::cmp::Reverse(x.seq)) < (y.activations, std::cmp::Reverse(y.seq));
    if x_less {
        (y, x, tie)
    } else {
        (x, y, tie)
    }
}

/// Pure: findings for the current knowledge base, all pending, with ids
/// left empty.
pub fn detect_conflicts(kb: &KnowledgeBase, catalog: &Catalog, now: Timestamp, horizon: Duration) -> Vec<ConflictFinding> {
    let rules: Vec<&StoredRule> = kb.rules.values().filter(|r| considered(r)).collect();
    let mut out = Vec::new();
    for (i, x) in rules.iter().enumerate() {
        for y in &rules[i + 1..] {
            let (a, b, tie) = order(x, y);
            let note = tie.then(|| "equal activation counts; the newer rule is the candidate".to_string());
            let finding = |kind| ConflictFinding {
                id: String::new(),
                kind,
                rule_a: a.rule.id.clone(),
                rule_b: Some(b.rule.id.clone()),
                resolution: Resolution::PendingUserConfirmation,
                note: note.clone(),
            };
            let same_if = a.rule.canonical().ifs == b.rule.canonical().ifs;
            let shared_effector = !a
                .rule
                .owners(ClauseKind::Effector)
                .is_disjoint(&b.rule.owners(ClauseKind::Effector));
            if same_if && shared_effector {
                out.push(finding(ConflictKind::DuplicateThen));
            }
            let antagonistic = a.rule.thens.iter().any(|p| {
                b.rule.thens.iter().any(|q| catalog.are_antagonistic(&p.condition_id, &q.condition_id))
            });
            if antagonistic {
                out.push(finding(ConflictKind::AntagonisticThen));
            }
        }
    }
    for r in rules {
        if r.activations == 0 && now - r.added_at > horizon {
            out.push(ConflictFinding {
                id: String::new(),
                kind: ConflictKind::NeverTriggered,
                rule_a: r.rule.id.clone(),
                rule_b: None,
                resolution: Resolution::PendingUserConfirmation,
                note: None,
            });
        }
    }
    out
}
