//! The rule engine: a knowledge base of stored rules, a periodic executor
//! driven by sensor snapshots, scheduled actions, and a conflict monitor.
//!
//! The engine runs on the timestamps carried by the snapshots it is fed;
//! it never reads the host clock. All state lives in [`EngineState`], which
//! is written to the store file (when one is configured) after every
//! mutation.

pub mod conflicts;
pub mod predicates;
pub mod service;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::warn;

use crate::catalog::{AttributeRole, Catalog, PollingClass, Scheduling};
use crate::rule::{encode_clause, Clause, Rule, RuleId, WireClause};
use crate::time::{self, DaySpec, Timestamp};
use crate::validator::{validate_rule, ValidationReport};

pub use conflicts::{detect_conflicts, ConflictFinding, ConflictKind, Resolution};
pub use predicates::{clause_satisfied, Match};

/// Readings keyed by sensor id, then trigger id.
pub type Readings = BTreeMap<String, BTreeMap<String, Value>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSnapshot {
    pub at: Timestamp,
    #[serde(default)]
    pub readings: Readings,
}

#[derive(Debug, Error)]
#[error("feed line {line}: {source}")]
pub struct FeedError {
    pub line: usize,
    pub source: serde_json::Error,
}

/// Parses a newline-delimited snapshot feed; blank lines are skipped.
pub fn parse_feed(text: &str) -> Result<Vec<SensorSnapshot>, FeedError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| FeedError { line: i + 1, source }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleStatus {
    /// Stored, waiting for its conditions.
    Queued,
    /// Has fired at least once.
    Active,
    Subsumed,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRule {
    pub rule: Rule,
    pub status: RuleStatus,
    pub activations: u64,
    pub added_at: Timestamp,
    /// Insertion order, used to tell the newer of two rules apart.
    pub seq: u64,
    #[serde(default)]
    pub confirmed_subsumed: bool,
    /// False between a firing and the next time the conjunction is false.
    pub armed: bool,
    #[serde(default)]
    pub last_checked: Option<Timestamp>,
}

impl StoredRule {
    fn runnable(&self) -> bool {
        matches!(self.status, RuleStatus::Queued | RuleStatus::Active)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub rule_id: RuleId,
    pub clause: WireClause,
    pub fire_at: Timestamp,
    pub dispatched_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub rules: BTreeMap<RuleId, StoredRule>,
    pub findings: Vec<ConflictFinding>,
    /// Scheduled requests not yet dispatched.
    pub pending: Vec<ActionRequest>,
    next_rule: u64,
    next_finding: u64,
    next_seq: u64,
}

impl KnowledgeBase {
    pub fn get(&self, id: &RuleId) -> Option<&StoredRule> {
        self.rules.get(id)
    }

    pub fn status(&self, id: &str) -> Option<RuleStatus> {
        self.rules.get(&RuleId::from(id)).map(|r| r.status)
    }

    pub fn activations(&self) -> BTreeMap<RuleId, u64> {
        self.rules.iter().map(|(id, r)| (id.clone(), r.activations)).collect()
    }

    fn fresh_rule_id(&mut self) -> RuleId {
        loop {
            self.next_rule += 1;
            let id = RuleId(format!("rule-{:04}", self.next_rule));
            if !self.rules.contains_key(&id) {
                return id;
            }
        }
    }
}

/// Everything the engine persists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub kb: KnowledgeBase,
    /// Latest state readings (everything that is not an event).
    pub world: Readings,
    /// Events delivered by the most recent snapshot; a rule added right
    /// after still sees them.
    pub last_events: Readings,
    pub seen_events: BTreeSet<String>,
    pub last_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// Rules without activations for this long are reported.
    pub never_triggered_horizon: Duration,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig { never_triggered_horizon: Duration::days(7) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserDecision {
    ConfirmSubsume,
    Keep,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("rule rejected by the validator")]
    Rejected(ValidationReport),
    #[error("snapshot at {at} is older than the previous one at {previous}")]
    TimeWentBackwards { at: Timestamp, previous: Timestamp },
    #[error("unknown finding `{0}`")]
    UnknownFinding(String),
    #[error("finding `{0}` is already resolved")]
    AlreadyResolved(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("cannot persist engine state to {path}: {source}")]
    Persist { path: String, source: std::io::Error },
    #[error("corrupt engine store {path}: {source}")]
    Corrupt { path: String, source: serde_json::Error },
    #[error("dispatch failed: {0}")]
    Dispatch(std::io::Error),
}

/// Receives dispatched action requests.
pub trait Dispatcher: Send {
    fn dispatch(&mut self, request: &ActionRequest) -> std::io::Result<()>;
}

/// Appends one JSON envelope per dispatched request to a file.
pub struct OutboxFile {
    file: std::fs::File,
}

impl OutboxFile {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<OutboxFile> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(OutboxFile { file })
    }
}

impl Dispatcher for OutboxFile {
    fn dispatch(&mut self, request: &ActionRequest) -> std::io::Result<()> {
        let line = serde_json::to_string(request).map_err(std::io::Error::other)?;
        writeln!(self.file, "{line}")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TickReport {
    /// Requests created by rules that fired on this snapshot.
    pub emitted: Vec<ActionRequest>,
    /// Requests handed to the dispatcher on this snapshot, in order.
    pub dispatched: Vec<ActionRequest>,
    pub new_findings: Vec<ConflictFinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddOutcome {
    pub rule_id: RuleId,
    pub report: ValidationReport,
    pub tick: TickReport,
}

pub struct Engine {
    catalog: Catalog,
    config: EngineConfig,
    state: EngineState,
    dispatcher: Option<Box<dyn Dispatcher>>,
    store: Option<PathBuf>,
}

impl Engine {
    pub fn new(catalog: Catalog, config: EngineConfig) -> Engine {
        Engine { catalog, config, state: EngineState::default(), dispatcher: None, store: None }
    }

    /// Uses `path` as the knowledge-base store, loading it when it exists.
    pub fn with_store(mut self, path: impl Into<PathBuf>) -> Result<Engine, EngineError> {
        let path = path.into();
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .map_err(|source| EngineError::Persist { path: path.display().to_string(), source })?;
            self.state = serde_json::from_str(&text)
                .map_err(|source| EngineError::Corrupt { path: path.display().to_string(), source })?;
        }
        self.store = Some(path);
        Ok(self)
    }

    pub fn with_dispatcher(mut self, dispatcher: Box<dyn Dispatcher>) -> Engine {
        self.dispatcher = Some(dispatcher);
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.state.kb
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// Validates, stores, runs the conflict monitor, evaluates against the
    /// latest readings, fires or queues.
    pub fn add_rule(&mut self, mut rule: Rule, now: Timestamp) -> Result<AddOutcome, EngineError> {
        let report = validate_rule(&rule, &self.catalog, now);
        if !report.ok {
            return Err(EngineError::Rejected(report));
        }
        let kb = &mut self.state.kb;
        if rule.id.0.is_empty() || kb.rules.contains_key(&rule.id) {
            rule.id = kb.fresh_rule_id();
        }
        let id = rule.id.clone();
        kb.next_seq += 1;
        let seq = kb.next_seq;
        kb.rules.insert(
            id.clone(),
            StoredRule {
                rule,
                status: RuleStatus::Queued,
                activations: 0,
                added_at: now,
                seq,
                confirmed_subsumed: false,
                armed: true,
                last_checked: None,
            },
        );
        let mut tick = TickReport::default();
        // a rule that duplicates a stored one is parked before it can fire
        self.monitor(now, &mut tick);
        let env = overlay(&self.state.world, &self.state.last_events);
        let events: BTreeSet<(String, String)> = keys(&self.state.last_events);
        self.evaluate(&id, &env, &events, now, &mut tick)?;
        self.dispatch_due(now, &mut tick)?;
        self.monitor(now, &mut tick);
        self.persist()?;
        Ok(AddOutcome { rule_id: id, report, tick })
    }

    pub fn tick(&mut self, snapshot: &SensorSnapshot) -> Result<TickReport, EngineError> {
        let at = snapshot.at;
        if let Some(previous) = self.state.last_at {
            if at < previous {
                return Err(EngineError::TimeWentBackwards { at, previous });
            }
        }
        self.state.last_at = Some(at);

        let mut events = Readings::new();
        for (sensor, triggers) in &snapshot.readings {
            for (trigger, env) in triggers {
                let Some(def) = self.catalog.trigger(sensor, trigger) else {
                    warn!(sensor, trigger, "reading for an unknown trigger skipped");
                    continue;
                };
                if def.polling_class == PollingClass::OnEvent {
                    let key = format!("{sensor}/{trigger}");
                    if let Some(fresh) = fresh_events(env, &key, &mut self.state.seen_events) {
                        events.entry(sensor.clone()).or_default().insert(trigger.clone(), fresh);
                    }
                } else {
                    self.state.world.entry(sensor.clone()).or_default().insert(trigger.clone(), env.clone());
                }
            }
        }
        self.state.last_events = events;

        let mut report = TickReport::default();
        self.dispatch_due(at, &mut report)?;
        let env = overlay(&self.state.world, &self.state.last_events);
        let event_keys = keys(&self.state.last_events);
        let ids: Vec<RuleId> = self.state.kb.rules.keys().cloned().collect();
        for id in ids {
            self.evaluate(&id, &env, &event_keys, at, &mut report)?;
        }
        self.dispatch_due(at, &mut report)?;
        self.monitor(at, &mut report);
        self.persist()?;
        Ok(report)
    }

    /// Pure view of the conflicts in the current knowledge base.
    pub fn detect_conflicts(&self, now: Timestamp) -> Vec<ConflictFinding> {
        detect_conflicts(&self.state.kb, &self.catalog, now, self.config.never_triggered_horizon)
    }

    pub fn resolve_conflict(&mut self, finding_id: &str, decision: UserDecision) -> Result<ConflictFinding, EngineError> {
        let kb = &mut self.state.kb;
        let finding = kb
            .findings
            .iter_mut()
            .find(|f| f.id == finding_id)
            .ok_or_else(|| EngineError::UnknownFinding(finding_id.to_string()))?;
        if finding.resolution != Resolution::PendingUserConfirmation {
            return Err(EngineError::AlreadyResolved(finding_id.to_string()));
        }
        let candidate = finding.candidate().clone();
        finding.resolution = match decision {
            UserDecision::ConfirmSubsume => Resolution::SubsumedB,
            UserDecision::Keep => Resolution::Dismissed,
        };
        let resolved = finding.clone();
        if let Some(r) = kb.rules.get_mut(&candidate) {
            match decision {
                UserDecision::ConfirmSubsume => {
                    r.status = RuleStatus::Subsumed;
                    r.confirmed_subsumed = true;
                }
                UserDecision::Keep => {
                    if r.status == RuleStatus::Subsumed && !r.confirmed_subsumed {
                        r.status = if r.activations > 0 { RuleStatus::Active } else { RuleStatus::Queued };
                    }
                }
            }
        }
        if decision == UserDecision::ConfirmSubsume {
            kb.pending.retain(|p| p.rule_id != candidate);
        }
        self.persist()?;
        Ok(resolved)
    }

    pub fn set_disabled(&mut self, rule_id: &str, disabled: bool) -> Result<(), EngineError> {
        let id = RuleId::from(rule_id);
        let kb = &mut self.state.kb;
        let r = kb.rules.get_mut(&id).ok_or_else(|| EngineError::UnknownRule(rule_id.to_string()))?;
        if disabled {
            r.status = RuleStatus::Disabled;
            kb.pending.retain(|p| p.rule_id != id);
        } else if r.status == RuleStatus::Disabled {
            r.status = if r.activations > 0 { RuleStatus::Active } else { RuleStatus::Queued };
        }
        self.persist()
    }

    fn is_due(&self, stored: &StoredRule, events: &BTreeSet<(String, String)>, at: Timestamp) -> bool {
        let mut period: Option<Duration> = None;
        for c in &stored.rule.ifs {
            let Some(def) = self.catalog.trigger(&c.owner_id, &c.condition_id) else { continue };
            match def.polling_class.period() {
                None => {
                    if events.contains(&(c.owner_id.clone(), c.condition_id.clone())) {
                        return true;
                    }
                }
                Some(p) => period = Some(period.map_or(p, |q| q.min(p))),
            }
        }
        match (period, stored.last_checked) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(p), Some(last)) => at - last >= p,
        }
    }

    fn has_event_clause(&self, rule: &Rule) -> bool {
        rule.ifs.iter().any(|c| {
            self.catalog
                .trigger(&c.owner_id, &c.condition_id)
                .is_some_and(|t| t.polling_class == PollingClass::OnEvent)
        })
    }

    fn evaluate(
        &mut self,
        id: &RuleId,
        env: &Readings,
        events: &BTreeSet<(String, String)>,
        at: Timestamp,
        report: &mut TickReport,
    ) -> Result<(), EngineError> {
        let Some(stored) = self.state.kb.rules.get(id) else { return Ok(()) };
        if !stored.runnable() || !stored.rule.is_executable() || !self.is_due(stored, events, at) {
            return Ok(());
        }
        let matched = rule_satisfied(&stored.rule, env, at);
        let fires = matched.is_some() && (stored.armed || self.has_event_clause(&stored.rule));
        let requests = match (&matched, fires) {
            (Some(m), true) => stored.rule.thens.iter().map(|c| self.request(id, c, &m.persons, at)).collect(),
            _ => Vec::new(),
        };
        let stored = self.state.kb.rules.get_mut(id).expect("rule present");
        stored.last_checked = Some(at);
        stored.armed = matched.is_none();
        if fires {
            stored.activations += 1;
            stored.status = RuleStatus::Active;
            report.emitted.extend(requests.iter().cloned());
            self.state.kb.pending.extend(requests);
        }
        Ok(())
    }

    fn request(&self, id: &RuleId, clause: &Clause, persons: &[String], at: Timestamp) -> ActionRequest {
        let mut resolved = clause.clone();
        if !persons.is_empty() {
            for b in &mut resolved.bindings {
                if b.value.to_lowercase().contains("mentioned in") {
                    b.value = persons.join(", ");
                }
            }
        }
        ActionRequest {
            rule_id: id.clone(),
            clause: encode_clause(&resolved),
            fire_at: self.fire_at(&resolved, at),
            dispatched_at: None,
        }
    }

    fn fire_at(&self, clause: &Clause, at: Timestamp) -> Timestamp {
        let Some(action) = self.catalog.action(&clause.owner_id, &clause.condition_id) else { return at };
        if action.scheduling == Scheduling::Immediate {
            return at;
        }
        let role_value = |role| {
            action
                .attributes
                .iter()
                .find(|a| a.role == Some(role))
                .map(|a| clause.value(&a.id))
                .unwrap_or("")
        };
        let Some(t) = time::parse_hhmm(role_value(AttributeRole::Time)) else { return at };
        let next = || {
            let today = at.date().and_time(t);
            if today > at {
                today
            } else {
                today + Duration::days(1)
            }
        };
        match DaySpec::parse(role_value(AttributeRole::Day)) {
            Some(day) => day.occurrence(t, at).unwrap_or_else(next),
            None => next(),
        }
    }

    fn dispatch_due(&mut self, at: Timestamp, report: &mut TickReport) -> Result<(), EngineError> {
        let pending = std::mem::take(&mut self.state.kb.pending);
        let (mut due, rest): (Vec<_>, Vec<_>) = pending.into_iter().partition(|p| p.fire_at <= at);
        self.state.kb.pending = rest;
        due.sort_by_key(|p| p.fire_at);
        for mut request in due {
            let runnable = self.state.kb.rules.get(&request.rule_id).is_some_and(|r| r.runnable());
            if !runnable {
                continue;
            }
            request.dispatched_at = Some(at);
            if let Some(d) = self.dispatcher.as_mut() {
                d.dispatch(&request).map_err(EngineError::Dispatch)?;
            }
            report.dispatched.push(request);
        }
        Ok(())
    }

    fn monitor(&mut self, now: Timestamp, report: &mut TickReport) {
        let found = self.detect_conflicts(now);
        let kb = &mut self.state.kb;
        for mut f in found {
            if kb.findings.iter().any(|g| g.same_subject(&f)) {
                continue;
            }
            kb.next_finding += 1;
            f.id = format!("finding-{:04}", kb.next_finding);
            if f.kind != ConflictKind::NeverTriggered {
                let candidate = f.candidate().clone();
                if let Some(r) = kb.rules.get_mut(&candidate) {
                    if r.runnable() {
                        r.status = RuleStatus::Subsumed;
                    }
                }
                kb.pending.retain(|p| p.rule_id != candidate);
            }
            report.new_findings.push(f.clone());
            kb.findings.push(f);
        }
    }

    fn persist(&self) -> Result<(), EngineError> {
        let Some(path) = &self.store else { return Ok(()) };
        let err = |source| EngineError::Persist { path: path.display().to_string(), source };
        let text = serde_json::to_string_pretty(&self.state).map_err(|e| err(std::io::Error::other(e)))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }
}

/// Conjunction of all IF clauses, collecting the people they mention.
pub fn rule_satisfied(rule: &Rule, env: &Readings, at: Timestamp) -> Option<Match> {
    let mut all = Match::default();
    for c in &rule.ifs {
        let reading = env.get(&c.owner_id).and_then(|t| t.get(&c.condition_id));
        let m = clause_satisfied(c, reading, at)?;
        for p in m.persons {
            if !all.persons.contains(&p) {
                all.persons.push(p);
            }
        }
    }
    Some(all)
}

fn overlay(world: &Readings, events: &Readings) -> Readings {
    let mut env = world.clone();
    for (sensor, triggers) in events {
        for (trigger, v) in triggers {
            env.entry(sensor.clone()).or_default().insert(trigger.clone(), v.clone());
        }
    }
    env
}

fn keys(readings: &Readings) -> BTreeSet<(String, String)> {
    readings
        .iter()
        .flat_map(|(s, t)| t.keys().map(move |k| (s.clone(), k.clone())))
        .collect()
}

/// Drops event items delivered before. An item is identified by its `id`
/// field when present, otherwise by its full content.
fn fresh_events(env: &Value, key: &str, seen: &mut BTreeSet<String>) -> Option<Value> {
    let identity = |item: &Value| match item.get("id") {
        Some(id) => format!("{key}#{id}"),
        None => format!("{key}={item}"),
    };
    let Value::Object(map) = env else {
        return seen.insert(identity(env)).then(|| env.clone());
    };
    let mut out = serde_json::Map::new();
    let mut any_list = false;
    let mut any_fresh = false;
    for (field, v) in map {
        match v {
            Value::Array(list) => {
                any_list = true;
                let fresh: Vec<Value> = list.iter().filter(|i| seen.insert(identity(i))).cloned().collect();
                any_fresh |= !fresh.is_empty();
                out.insert(field.clone(), Value::Array(fresh));
            }
            other => {
                out.insert(field.clone(), other.clone());
            }
        }
    }
    if any_list {
        any_fresh.then_some(Value::Object(out))
    } else {
        seen.insert(identity(env)).then(|| env.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rule::ClauseKind;
    use serde_json::json;

    fn at(s: &str) -> Timestamp {
        time::parse_timestamp(s).unwrap()
    }

    fn snapshot(s: &str, readings: Value) -> SensorSnapshot {
        SensorSnapshot { at: at(s), readings: serde_json::from_value(readings).unwrap() }
    }

    fn s1_rule() -> Rule {
        let c = fixtures::default_catalog();
        Rule::new(
            vec![Clause::bind(&c, ClauseKind::Sensor, "if-news", "if-news-receive", &[("if-news-receive-title", "Steelers")]).unwrap()],
            vec![Clause::bind(
                &c,
                ClauseKind::Effector,
                "then-notification",
                "then-notification-send",
                &[("then-notification-send-content", "News of Steelers!")],
            )
            .unwrap()],
        )
    }

    #[test]
    fn add_without_news_queues() {
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default());
        let out = e.add_rule(s1_rule(), at("2018-01-01T08:00")).unwrap();
        assert!(out.tick.emitted.is_empty());
        assert_eq!(out.rule_id.as_str(), "rule-0001");
        assert_eq!(e.kb().status("rule-0001"), Some(RuleStatus::Queued));
    }

    #[test]
    fn add_with_pending_news_fires() {
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default());
        e.tick(&snapshot("2018-01-01T08:00", json!({"if-news": {"if-news-receive": {"news": [{"title": "Steelers win"}]}}})))
            .unwrap();
        let out = e.add_rule(s1_rule(), at("2018-01-01T08:00")).unwrap();
        assert_eq!(out.tick.emitted.len(), 1);
        assert_eq!(out.tick.emitted[0].fire_at, at("2018-01-01T08:00"));
        assert_eq!(out.tick.dispatched.len(), 1);
        assert_eq!(e.kb().status("rule-0001"), Some(RuleStatus::Active));
    }

    #[test]
    fn events_are_consumed_once() {
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default());
        e.add_rule(s1_rule(), at("2018-01-01T08:00")).unwrap();
        let news = json!({"if-news": {"if-news-receive": {"news": [{"title": "Steelers win"}]}}});
        assert_eq!(e.tick(&snapshot("2018-01-01T09:00", news.clone())).unwrap().emitted.len(), 1);
        assert_eq!(e.tick(&snapshot("2018-01-01T10:00", news)).unwrap().emitted.len(), 0);
        let other = json!({"if-news": {"if-news-receive": {"news": [{"title": "Steelers lose"}]}}});
        assert_eq!(e.tick(&snapshot("2018-01-01T11:00", other)).unwrap().emitted.len(), 1);
    }

    #[test]
    fn invalid_rule_not_stored() {
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default());
        let mut r = s1_rule();
        r.thens.clear();
        assert!(matches!(e.add_rule(r, at("2018-01-01T08:00")), Err(EngineError::Rejected(_))));
        assert!(e.kb().rules.is_empty());
    }

    #[test]
    fn time_must_not_go_backwards() {
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default());
        e.tick(&snapshot("2018-01-01T09:00", json!({}))).unwrap();
        assert!(matches!(
            e.tick(&snapshot("2018-01-01T08:00", json!({}))),
            Err(EngineError::TimeWentBackwards { .. })
        ));
    }

    #[test]
    fn never_triggered_after_horizon() {
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default());
        e.add_rule(s1_rule(), at("2018-01-01T08:00")).unwrap();
        assert!(e.tick(&snapshot("2018-01-05T08:00", json!({}))).unwrap().new_findings.is_empty());
        let found = e.tick(&snapshot("2018-01-09T08:00", json!({}))).unwrap().new_findings;
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, ConflictKind::NeverTriggered);
        // a never-triggered rule is reported, not subsumed
        assert_eq!(e.kb().status("rule-0001"), Some(RuleStatus::Queued));
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.json");
        let mut e = Engine::new(fixtures::default_catalog(), EngineConfig::default()).with_store(&path).unwrap();
        e.add_rule(s1_rule(), at("2018-01-01T08:00")).unwrap();
        let reloaded = Engine::new(fixtures::default_catalog(), EngineConfig::default()).with_store(&path).unwrap();
        assert_eq!(reloaded.state(), e.state());
    }
}
