//! Output-agreement voting over the rules a session's workers submitted.
//!
//! Three stages: keep every sensor/effector chosen by at least
//! `inclusion_threshold` distinct workers; for each kept owner pick the
//! trigger/action chosen by most workers; for each attribute of that
//! trigger/action pick the value proposed by most of the workers who chose
//! it. Ties go to whatever was proposed earliest.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::rule::{canonical_value, AttributeBinding, Clause, ClauseKind, Provenance, Rule};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub worker_id: String,
    pub rule: Rule,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub inclusion_threshold: usize,
    pub min_submissions: usize,
}

impl Default for MergeConfig {
    fn default() -> MergeConfig {
        MergeConfig { inclusion_threshold: 2, min_submissions: 1 }
    }
}

/// Votes for one candidate. `first_at`/`first_worker` identify the earliest
/// proposal, which wins ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub candidate: String,
    pub votes: usize,
    pub first_at: Timestamp,
    pub first_worker: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeVote {
    pub attr_id: String,
    /// Canonical values; the empty string is a vote for blank.
    pub tallies: Vec<Tally>,
    pub chosen: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerVote {
    pub kind: ClauseKind,
    pub owner_id: String,
    pub votes: usize,
    pub included: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<Tally>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<AttributeVote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub workers: usize,
    pub threshold: usize,
    pub owners: Vec<OwnerVote>,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("no submissions to merge")]
    NoSubmissions,
    #[error("{got} workers submitted, at least {need} required")]
    NotEnoughSubmissions { got: usize, need: usize },
    #[error("inclusion threshold must be at least 1")]
    InvalidThreshold,
    #[error("submission of worker `{worker_id}` is not valid against the catalog: {reason}")]
    InvalidSubmission { worker_id: String, reason: String },
    #[error("no sensor or effector reached the inclusion threshold of {}", trace.threshold)]
    EmptyFinalRule { trace: Box<MergeTrace> },
}

/// Latest submission per worker, in proposal order: by time, then worker id.
pub fn ballot(subs: &[Submission]) -> Vec<&Submission> {
    let mut latest: BTreeMap<&str, &Submission> = BTreeMap::new();
    for s in subs {
        match latest.get(s.worker_id.as_str()) {
            Some(prev) if prev.submitted_at > s.submitted_at => {}
            _ => {
                latest.insert(&s.worker_id, s);
            }
        }
    }
    let mut out: Vec<&Submission> = latest.into_values().collect();
    out.sort_by(|a, b| (a.submitted_at, &a.worker_id).cmp(&(b.submitted_at, &b.worker_id)));
    out
}

fn check_structure(sub: &Submission, catalog: &Catalog) -> Result<(), MergeError> {
    let invalid = |reason: String| MergeError::InvalidSubmission { worker_id: sub.worker_id.clone(), reason };
    for (kind, clauses) in [(ClauseKind::Sensor, &sub.rule.ifs), (ClauseKind::Effector, &sub.rule.thens)] {
        for c in clauses {
            if c.kind != kind {
                return Err(invalid(format!("`{}` is on the wrong side", c.owner_id)));
            }
            let def = catalog
                .lookup(kind, &c.owner_id, &c.condition_id)
                .map_err(|e| invalid(e.to_string()))?;
            for b in &c.bindings {
                if def.attribute(&b.attr_id).is_none() {
                    return Err(invalid(format!("`{}` has no attribute `{}`", def.id(), b.attr_id)));
                }
            }
        }
    }
    Ok(())
}

struct Counter {
    tallies: Vec<Tally>,
    voters: Vec<BTreeSet<usize>>,
}

impl Counter {
    fn new() -> Counter {
        Counter { tallies: Vec::new(), voters: Vec::new() }
    }

    /// Registers a vote; calls must arrive in proposal order.
    fn vote(&mut self, candidate: &str, voter: usize, sub: &Submission) {
        let idx = match self.tallies.iter().position(|t| t.candidate == candidate) {
            Some(i) => i,
            None => {
                self.tallies.push(Tally {
                    candidate: candidate.to_string(),
                    votes: 0,
                    first_at: sub.submitted_at,
                    first_worker: sub.worker_id.clone(),
                });
                self.voters.push(BTreeSet::new());
                self.tallies.len() - 1
            }
        };
        if self.voters[idx].insert(voter) {
            self.tallies[idx].votes += 1;
        }
    }

    /// Most votes wins; the candidate proposed first breaks ties. Tallies are
    /// kept in first-proposal order, so the first maximum is the winner.
    fn winner(&self) -> Option<&Tally> {
        let best = self.tallies.iter().map(|t| t.votes).max()?;
        self.tallies.iter().find(|t| t.votes == best)
    }
}

pub fn merge_rules(subs: &[Submission], cfg: &MergeConfig, catalog: &Catalog) -> Result<MergeTrace, MergeError> {
    if cfg.inclusion_threshold == 0 {
        return Err(MergeError::InvalidThreshold);
    }
    if subs.is_empty() {
        return Err(MergeError::NoSubmissions);
    }
    let order = ballot(subs);
    if order.len() < cfg.min_submissions {
        return Err(MergeError::NotEnoughSubmissions { got: order.len(), need: cfg.min_submissions });
    }
    for s in &order {
        check_structure(s, catalog)?;
    }

    let mut owners = Vec::new();
    let mut final_sides: [Vec<Clause>; 2] = [Vec::new(), Vec::new()];
    for (slot, kind) in [ClauseKind::Sensor, ClauseKind::Effector].into_iter().enumerate() {
        let mut owner_votes = Counter::new();
        for (w, s) in order.iter().enumerate() {
            for c in s.rule.clauses(kind) {
                owner_votes.vote(&c.owner_id, w, s);
            }
        }
        for tally in &owner_votes.tallies {
            let owner_id = tally.candidate.as_str();
            let included = tally.votes >= cfg.inclusion_threshold;
            let mut vote = OwnerVote {
                kind,
                owner_id: owner_id.to_string(),
                votes: tally.votes,
                included,
                conditions: Vec::new(),
                chosen: None,
                attributes: Vec::new(),
            };
            if included {
                let clause = choose_clause(&order, kind, owner_id, catalog, &mut vote);
                final_sides[slot].push(clause);
            }
            owners.push(vote);
        }
    }

    let [ifs, thens] = final_sides;
    let latest = order.iter().map(|s| s.submitted_at).max().expect("nonempty ballot");
    let rule = Rule::new(ifs, thens)
        .with_provenance(Provenance::CrowdVoting)
        .with_created_at(latest);
    let trace = MergeTrace { workers: order.len(), threshold: cfg.inclusion_threshold, owners, rule };
    if trace.rule.ifs.is_empty() && trace.rule.thens.is_empty() {
        return Err(MergeError::EmptyFinalRule { trace: Box::new(trace) });
    }
    Ok(trace)
}

fn choose_clause(
    order: &[&Submission],
    kind: ClauseKind,
    owner_id: &str,
    catalog: &Catalog,
    vote: &mut OwnerVote,
) -> Clause {
    let mut conditions = Counter::new();
    for (w, s) in order.iter().enumerate() {
        for c in s.rule.clauses(kind).iter().filter(|c| c.owner_id == owner_id) {
            conditions.vote(&c.condition_id, w, s);
        }
    }
    let condition_id = conditions.winner().expect("included owner has a condition").candidate.clone();
    let def = catalog
        .lookup(kind, owner_id, &condition_id)
        .expect("submissions were checked against the catalog");

    let mut bindings = Vec::new();
    for attr in def.attributes() {
        let mut values = Counter::new();
        // verbatim spelling of the first proposal of each canonical value
        let mut spelling: BTreeMap<String, String> = BTreeMap::new();
        for (w, s) in order.iter().enumerate() {
            let chosen = s
                .rule
                .clauses(kind)
                .iter()
                .filter(|c| c.owner_id == owner_id && c.condition_id == condition_id);
            for c in chosen {
                let raw = c.value(&attr.id);
                let canon = canonical_value(raw, attr.input_type);
                spelling.entry(canon.clone()).or_insert_with(|| raw.trim().to_string());
                values.vote(&canon, w, s);
            }
        }
        let winner = values.winner().map(|t| t.candidate.clone()).unwrap_or_default();
        if !winner.is_empty() {
            bindings.push(AttributeBinding {
                attr_id: attr.id.clone(),
                value: spelling[&winner].clone(),
                input_type: attr.input_type,
                wire_type: attr.wire_type(),
            });
        }
        vote.attributes.push(AttributeVote { attr_id: attr.id.clone(), tallies: values.tallies, chosen: winner });
    }
    vote.conditions = conditions.tallies;
    vote.chosen = Some(condition_id.clone());
    Clause { kind, owner_id: owner_id.to_string(), condition_id, bindings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMargin {
    pub winner_count: usize,
    pub runner_up_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarginError {
    #[error("`{0}` received no votes")]
    UnknownOwner(String),
    #[error("`{0}` did not reach the inclusion threshold")]
    NotIncluded(String),
}

/// The closest decision taken for an owner: over its trigger/action choice
/// and every attribute value, the (winner, runner-up) pair with the
/// smallest gap. Earlier decisions win ties.
pub fn vote_margin(trace: &MergeTrace, owner_id: &str) -> Result<VoteMargin, MarginError> {
    let owner = trace
        .owners
        .iter()
        .find(|o| o.owner_id == owner_id)
        .ok_or_else(|| MarginError::UnknownOwner(owner_id.to_string()))?;
    if !owner.included {
        return Err(MarginError::NotIncluded(owner_id.to_string()));
    }
    let margin = |tallies: &[Tally]| {
        let mut counts: Vec<usize> = tallies.iter().map(|t| t.votes).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        VoteMargin {
            winner_count: counts.first().copied().unwrap_or(0),
            runner_up_count: counts.get(1).copied().unwrap_or(0),
        }
    };
    let decisions = std::iter::once(margin(&owner.conditions)).chain(owner.attributes.iter().map(|a| margin(&a.tallies)));
    let mut best: Option<VoteMargin> = None;
    for m in decisions {
        let gap = m.winner_count - m.runner_up_count;
        if best.is_none_or(|b| gap < b.winner_count - b.runner_up_count) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least the condition decision"))
}
