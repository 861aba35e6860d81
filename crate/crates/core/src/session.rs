//! Collaborative rule-authoring sessions.
//!
//! A user opens a session, workers join it, everyone chats, workers submit
//! candidate rules, and the session is finalized into one rule that goes to
//! the user's engine. Each session is serialized by its own lock and logged
//! as newline-delimited JSON, so a log replays to the same state.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::engine::service::EngineHandle;
use crate::merge::{ballot, merge_rules, MergeConfig, MergeError, Submission};
use crate::render::render_rule;
use crate::rule::{decode_document, decode_rule, DecodeError, Provenance, Rule, RuleEnvelope, RuleId};
use crate::time::Timestamp;
use crate::validator::{validate_rule, ValidationReport};

pub const DEFAULT_CAPACITY: usize = 10;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Host wall clock, local time.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        chrono::Local::now().naive_local()
    }
}

/// Starts at a fixed instant and advances by `step` on every reading.
pub struct SteppingClock {
    next: Mutex<Timestamp>,
    step: chrono::Duration,
}

impl SteppingClock {
    pub fn new(start: Timestamp, step: chrono::Duration) -> SteppingClock {
        SteppingClock { next: Mutex::new(start), step }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> Timestamp {
        let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
        let t = *next;
        *next = t + self.step;
        t
    }
}

/// Where finalized rules go.
pub trait RuleSink: Send + Sync {
    /// Returns the id the receiving store assigned.
    fn deliver(&self, rule: &Rule) -> Result<String, String>;
}

impl RuleSink for EngineHandle {
    fn deliver(&self, rule: &Rule) -> Result<String, String> {
        self.add_rule(rule.clone(), rule.created_at)
            .map(|o| o.rule_id.0)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", content = "id", rename_all = "lowercase")]
pub enum Author {
    User,
    Worker(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub session_id: String,
    pub seq: u64,
    pub author: Author,
    pub text: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    pub capacity: usize,
    pub opened_at: Timestamp,
    /// In join order.
    pub worker_ids: Vec<String>,
    pub messages: Vec<Message>,
    /// Current candidate of each worker: a newer submission replaces the older.
    pub submissions: Vec<Submission>,
    pub state: SessionState,
    pub final_rule: Option<Rule>,
    /// Submissions each worker has made so far, for candidate ids.
    pub submission_counts: BTreeMap<String, u64>,
    pub last_at: Timestamp,
}

impl Session {
    pub fn candidate(&self, rule_id: &str) -> Option<&Submission> {
        self.submissions.iter().find(|s| s.rule.id.as_str() == rule_id)
    }

    pub fn view(&self, catalog: &Catalog) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            user_id: self.user_id.clone(),
            capacity: self.capacity,
            state: self.state,
            workers: self.worker_ids.clone(),
            messages: self.messages.clone(),
            candidates: self.submissions.iter().map(|s| Candidate::new(s, catalog)).collect(),
            final_rule: self.final_rule.as_ref().map(|r| FinalRule::new(r, catalog)),
        }
    }
}

/// A candidate rule as shown to the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub worker_id: String,
    pub rule_id: String,
    pub submitted_at: Timestamp,
    pub color: String,
    pub description: String,
    pub rule: crate::rule::WireRule,
}

impl Candidate {
    fn new(s: &Submission, catalog: &Catalog) -> Candidate {
        Candidate {
            worker_id: s.worker_id.clone(),
            rule_id: s.rule.id.0.clone(),
            submitted_at: s.submitted_at,
            color: s.rule.provenance.color().to_string(),
            description: render_rule(&s.rule, catalog),
            rule: crate::rule::encode_rule(&s.rule),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRule {
    pub color: String,
    pub description: String,
    pub envelope: RuleEnvelope,
}

impl FinalRule {
    fn new(rule: &Rule, catalog: &Catalog) -> FinalRule {
        FinalRule {
            color: rule.provenance.color().to_string(),
            description: render_rule(rule, catalog),
            envelope: RuleEnvelope::from_rule(rule),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub user_id: String,
    pub capacity: usize,
    pub state: SessionState,
    pub workers: Vec<String>,
    pub messages: Vec<Message>,
    pub candidates: Vec<Candidate>,
    pub final_rule: Option<FinalRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalizeMode {
    UserPick { rule_id: String },
    UserEdited { rule: Value },
    Voting {
        #[serde(default = "default_threshold")]
        threshold: usize,
    },
}

fn default_threshold() -> usize {
    MergeConfig::default().inclusion_threshold
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Opened { session_id: String, user_id: String, capacity: usize, at: Timestamp },
    Joined { worker_id: String, at: Timestamp },
    Message { author: Author, text: String, at: Timestamp },
    Submitted { worker_id: String, rule: Value, at: Timestamp },
    Finalized { mode: FinalizeMode, rule: RuleEnvelope, at: Timestamp },
}

impl LogEvent {
    fn at(&self) -> Timestamp {
        match self {
            LogEvent::Opened { at, .. }
            | LogEvent::Joined { at, .. }
            | LogEvent::Message { at, .. }
            | LogEvent::Submitted { at, .. }
            | LogEvent::Finalized { at, .. } => *at,
        }
    }
}

/// Events pushed to connected participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEvent {
    Opened { session_id: String, user_id: String, capacity: usize },
    Joined { session_id: String, worker_id: String },
    Msg { session_id: String, message: Message },
    Candidate { session_id: String, candidate: Candidate },
    Finalized {
        session_id: String,
        rule: FinalRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        engine_rule_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delivery_error: Option<String>,
    },
    State { session: SessionView },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<ValidationReport>,
    },
}

impl ServerEvent {
    pub fn session_id(&self) -> Option<&str> {
        match self {
            ServerEvent::Opened { session_id, .. }
            | ServerEvent::Joined { session_id, .. }
            | ServerEvent::Msg { session_id, .. }
            | ServerEvent::Candidate { session_id, .. }
            | ServerEvent::Finalized { session_id, .. } => Some(session_id),
            ServerEvent::State { session } => Some(&session.session_id),
            ServerEvent::Error { .. } => None,
        }
    }
}

/// Requests a client can send over the socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Open {
        user_id: String,
        #[serde(default = "default_capacity")]
        capacity: usize,
    },
    Join { session_id: String, worker_id: String },
    Msg { session_id: String, author: Author, text: String },
    Submit { session_id: String, worker_id: String, rule: Value },
    Finalize { session_id: String, mode: FinalizeMode },
    State { session_id: String },
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is closed")]
    Closed(String),
    #[error("capacity must be at least 1")]
    BadCapacity,
    #[error("message text is empty")]
    EmptyText,
    #[error("session `{session_id}` is full ({capacity} workers)")]
    Full { session_id: String, capacity: usize },
    #[error("worker `{0}` has not joined this session")]
    NotJoined(String),
    #[error("rule document rejected: {0}")]
    Decode(#[from] DecodeError),
    #[error("rule failed validation")]
    Rejected(ValidationReport),
    #[error("no candidate rules have been submitted")]
    NoSubmissions,
    #[error("unknown candidate rule `{0}`")]
    UnknownRule(String),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("session log {path}: {message}")]
    Log { path: String, message: String },
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown-session",
            SessionError::Closed(_) => "session-closed",
            SessionError::BadCapacity => "bad-capacity",
            SessionError::EmptyText => "empty-text",
            SessionError::Full { .. } => "session-full",
            SessionError::NotJoined(_) => "not-joined",
            SessionError::Decode(_) => "decode-error",
            SessionError::Rejected(_) => "validation-failed",
            SessionError::NoSubmissions => "no-submissions",
            SessionError::UnknownRule(_) => "unknown-rule",
            SessionError::Merge(_) => "merge-failed",
            SessionError::Log { .. } => "log-error",
        }
    }

    pub fn to_event(&self) -> ServerEvent {
        let report = match self {
            SessionError::Rejected(r) => Some(r.clone()),
            _ => None,
        };
        ServerEvent::Error { code: self.code().to_string(), message: self.to_string(), report }
    }
}

pub type Listener = Box<dyn Fn(&ServerEvent) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    session_id: String,
    user_id: String,
    opened_at: Timestamp,
    log: String,
}

pub struct SessionService {
    catalog: Arc<Catalog>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
    counter: Mutex<u64>,
    log_dir: Option<PathBuf>,
    listeners: Mutex<Vec<Listener>>,
    sink: Option<Arc<dyn RuleSink>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionService {
    pub fn new(catalog: Arc<Catalog>, clock: Arc<dyn Clock>) -> SessionService {
        SessionService {
            catalog,
            clock,
            sessions: Mutex::new(BTreeMap::new()),
            counter: Mutex::new(0),
            log_dir: None,
            listeners: Mutex::new(Vec::new()),
            sink: None,
        }
    }

    /// Logs every session under `dir`, restoring the sessions already there.
    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Result<SessionService, SessionError> {
        let dir = dir.into();
        let err = |message: String| SessionError::Log { path: dir.display().to_string(), message };
        std::fs::create_dir_all(&dir).map_err(|e| err(e.to_string()))?;
        let index = dir.join("index.ndjson");
        if index.exists() {
            let text = std::fs::read_to_string(&index).map_err(|e| err(e.to_string()))?;
            let mut sessions = BTreeMap::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let entry: IndexEntry = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
                let log = std::fs::read_to_string(dir.join(&entry.log)).map_err(|e| err(e.to_string()))?;
                let session = replay(&log, &self.catalog)?;
                sessions.insert(entry.session_id, Arc::new(Mutex::new(session)));
            }
            *lock(&self.counter) = sessions.len() as u64;
            self.sessions = Mutex::new(sessions);
        }
        self.log_dir = Some(dir);
        Ok(self)
    }

    pub fn with_rule_sink(mut self, sink: Arc<dyn RuleSink>) -> SessionService {
        self.sink = Some(sink);
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn subscribe(&self, listener: Listener) {
        lock(&self.listeners).push(listener);
    }

    fn broadcast(&self, event: &ServerEvent) {
        for l in lock(&self.listeners).iter() {
            l(event);
        }
    }

    fn session(&self, session_id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        lock(&self.sessions)
            .get(session_id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(session_id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        lock(&self.sessions).keys().cloned().collect()
    }

    pub fn snapshot(&self, session_id: &str) -> Result<Session, SessionError> {
        let session = self.session(session_id)?;
        let guard = lock(&session);
        Ok(guard.clone())
    }

    pub fn view(&self, session_id: &str) -> Result<SessionView, SessionError> {
        Ok(self.snapshot(session_id)?.view(&self.catalog))
    }

    fn append_log(&self, session_id: &str, event: &LogEvent) -> Result<(), SessionError> {
        let Some(dir) = &self.log_dir else { return Ok(()) };
        let path = dir.join(format!("{session_id}.ndjson"));
        let err = |e: std::io::Error| SessionError::Log { path: path.display().to_string(), message: e.to_string() };
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(err)?;
        let line = serde_json::to_string(event).expect("log events serialize");
        writeln!(f, "{line}").map_err(err)
    }

    pub fn open_session(&self, user_id: &str, capacity: usize) -> Result<Session, SessionError> {
        if capacity == 0 {
            return Err(SessionError::BadCapacity);
        }
        let at = self.clock.now();
        let session_id = {
            let mut n = lock(&self.counter);
            *n += 1;
            format!("session-{:04}", *n)
        };
        let event = LogEvent::Opened { session_id: session_id.clone(), user_id: user_id.to_string(), capacity, at };
        let session = apply_open(&event);
        if let Some(dir) = &self.log_dir {
            let entry = IndexEntry {
                session_id: session_id.clone(),
                user_id: user_id.to_string(),
                opened_at: at,
                log: format!("{session_id}.ndjson"),
            };
            let path = dir.join("index.ndjson");
            let err = |e: std::io::Error| SessionError::Log { path: path.display().to_string(), message: e.to_string() };
            let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(err)?;
            writeln!(f, "{}", serde_json::to_string(&entry).expect("index entries serialize")).map_err(err)?;
        }
        self.append_log(&session_id, &event)?;
        lock(&self.sessions).insert(session_id.clone(), Arc::new(Mutex::new(session.clone())));
        self.broadcast(&ServerEvent::Opened { session_id, user_id: user_id.to_string(), capacity });
        Ok(session)
    }

    /// Runs `event` against the session under its lock, then logs and
    /// broadcasts. The timestamp is the clock's, clamped to stay monotone.
    /// Returns the updated session.
    fn mutate(
        &self,
        session_id: &str,
        make: impl FnOnce(Timestamp) -> LogEvent,
        out: impl FnOnce(&Session) -> ServerEvent,
    ) -> Result<Session, SessionError> {
        let handle = self.session(session_id)?;
        let mut session = lock(&handle);
        let at = self.clock.now().max(session.last_at);
        let event = make(at);
        let mut next = session.clone();
        apply_event(&mut next, &event, &self.catalog)?;
        self.append_log(session_id, &event)?;
        *session = next;
        self.broadcast(&out(&session));
        Ok(session.clone())
    }

    pub fn join(&self, session_id: &str, worker_id: &str) -> Result<Session, SessionError> {
        self.mutate(
            session_id,
            |at| LogEvent::Joined { worker_id: worker_id.to_string(), at },
            |s| ServerEvent::Joined { session_id: s.session_id.clone(), worker_id: worker_id.to_string() },
        )
    }

    pub fn post_message(&self, session_id: &str, author: Author, text: &str) -> Result<Message, SessionError> {
        let session = self.mutate(
            session_id,
            |at| LogEvent::Message { author: author.clone(), text: text.to_string(), at },
            |s| ServerEvent::Msg {
                session_id: s.session_id.clone(),
                message: s.messages.last().cloned().expect("message appended"),
            },
        )?;
        Ok(session.messages.last().cloned().expect("message appended"))
    }

    pub fn submit_rule(&self, session_id: &str, worker_id: &str, doc: &Value) -> Result<Submission, SessionError> {
        let session = self.mutate(
            session_id,
            |at| LogEvent::Submitted { worker_id: worker_id.to_string(), rule: doc.clone(), at },
            |s| {
                let sub = s.submissions.iter().find(|x| x.worker_id == worker_id).expect("stored");
                ServerEvent::Candidate { session_id: s.session_id.clone(), candidate: Candidate::new(sub, &self.catalog) }
            },
        )?;
        Ok(session.submissions.into_iter().find(|x| x.worker_id == worker_id).expect("stored"))
    }

    /// Produces the final rule, closes the session and hands the rule to the
    /// configured sink.
    pub fn finalize(&self, session_id: &str, mode: FinalizeMode) -> Result<ServerEvent, SessionError> {
        let handle = self.session(session_id)?;
        let mut session = lock(&handle);
        let at = self.clock.now().max(session.last_at);
        let rule = final_rule(&session, &mode, at, &self.catalog)?;
        let event = LogEvent::Finalized { mode, rule: RuleEnvelope::from_rule(&rule), at };
        let mut next = session.clone();
        apply_event(&mut next, &event, &self.catalog)?;
        self.append_log(session_id, &event)?;
        *session = next;
        let (engine_rule_id, delivery_error) = match &self.sink {
            None => (None, None),
            Some(sink) => match sink.deliver(&rule) {
                Ok(id) => (Some(id), None),
                Err(e) => (None, Some(e)),
            },
        };
        let out = ServerEvent::Finalized {
            session_id: session_id.to_string(),
            rule: FinalRule::new(&rule, &self.catalog),
            engine_rule_id,
            delivery_error,
        };
        self.broadcast(&out);
        Ok(out)
    }

    /// Handles one protocol request, returning the reply for the sender.
    pub fn handle(&self, msg: ClientMessage) -> ServerEvent {
        let result = match msg {
            ClientMessage::Open { user_id, capacity } => self
                .open_session(&user_id, capacity)
                .map(|s| ServerEvent::State { session: s.view(&self.catalog) }),
            ClientMessage::Join { session_id, worker_id } => {
                self.join(&session_id, &worker_id).and_then(|_| self.state_event(&session_id))
            }
            ClientMessage::Msg { session_id, author, text } => self
                .post_message(&session_id, author, &text)
                .map(|message| ServerEvent::Msg { session_id, message }),
            ClientMessage::Submit { session_id, worker_id, rule } => {
                self.submit_rule(&session_id, &worker_id, &rule).map(|s| ServerEvent::Candidate {
                    session_id,
                    candidate: Candidate::new(&s, &self.catalog),
                })
            }
            ClientMessage::Finalize { session_id, mode } => self.finalize(&session_id, mode),
            ClientMessage::State { session_id } => self.state_event(&session_id),
        };
        result.unwrap_or_else(|e| e.to_event())
    }

    fn state_event(&self, session_id: &str) -> Result<ServerEvent, SessionError> {
        Ok(ServerEvent::State { session: self.view(session_id)? })
    }
}

fn apply_open(event: &LogEvent) -> Session {
    let LogEvent::Opened { session_id, user_id, capacity, at } = event else {
        unreachable!("apply_open takes an Opened event")
    };
    Session {
        session_id: session_id.clone(),
        user_id: user_id.clone(),
        capacity: *capacity,
        opened_at: *at,
        worker_ids: Vec::new(),
        messages: Vec::new(),
        submissions: Vec::new(),
        state: SessionState::Open,
        final_rule: None,
        submission_counts: BTreeMap::new(),
        last_at: *at,
    }
}

fn final_rule(session: &Session, mode: &FinalizeMode, at: Timestamp, catalog: &Catalog) -> Result<Rule, SessionError> {
    if session.state == SessionState::Closed {
        return Err(SessionError::Closed(session.session_id.clone()));
    }
    let mut rule = match mode {
        FinalizeMode::UserPick { rule_id } => {
            let sub = session.candidate(rule_id).ok_or_else(|| SessionError::UnknownRule(rule_id.clone()))?;
            sub.rule.clone().with_provenance(Provenance::Crowd)
        }
        FinalizeMode::UserEdited { rule } => {
            let rule = decode_document(rule, catalog)?;
            let report = validate_rule(&rule, catalog, at);
            if !report.ok {
                return Err(SessionError::Rejected(report));
            }
            rule.with_id(format!("{}-final", session.session_id))
                .with_provenance(Provenance::CrowdEditedByUser)
        }
        FinalizeMode::Voting { threshold } => {
            if session.submissions.is_empty() {
                return Err(SessionError::NoSubmissions);
            }
            let cfg = MergeConfig { inclusion_threshold: *threshold, ..MergeConfig::default() };
            merge_rules(&session.submissions, &cfg, catalog)?
                .rule
                .with_id(format!("{}-final", session.session_id))
        }
    };
    rule.created_at = at;
    rule.session_id = Some(session.session_id.clone());
    Ok(rule)
}

/// Applies one logged event. Used both live and when replaying a log.
fn apply_event(session: &mut Session, event: &LogEvent, catalog: &Catalog) -> Result<(), SessionError> {
    let at = event.at();
    let open = || {
        if session.state == SessionState::Closed {
            Err(SessionError::Closed(session.session_id.clone()))
        } else {
            Ok(())
        }
    };
    match event {
        LogEvent::Opened { .. } => {
            *session = apply_open(event);
            return Ok(());
        }
        LogEvent::Joined { worker_id, .. } => {
            open()?;
            if !session.worker_ids.contains(worker_id) {
                if session.worker_ids.len() >= session.capacity {
                    return Err(SessionError::Full { session_id: session.session_id.clone(), capacity: session.capacity });
                }
                session.worker_ids.push(worker_id.clone());
            }
        }
        LogEvent::Message { author, text, .. } => {
            open()?;
            if text.trim().is_empty() {
                return Err(SessionError::EmptyText);
            }
            if let Author::Worker(w) = author {
                if !session.worker_ids.contains(w) {
                    return Err(SessionError::NotJoined(w.clone()));
                }
            }
            session.messages.push(Message {
                session_id: session.session_id.clone(),
                seq: session.messages.len() as u64 + 1,
                author: author.clone(),
                text: text.clone(),
                at,
            });
        }
        LogEvent::Submitted { worker_id, rule, .. } => {
            open()?;
            if !session.worker_ids.contains(worker_id) {
                return Err(SessionError::NotJoined(worker_id.clone()));
            }
            let decoded = decode_rule(rule, catalog)?;
            let report = validate_rule(&decoded, catalog, at);
            if !report.ok {
                return Err(SessionError::Rejected(report));
            }
            let n = session.submission_counts.entry(worker_id.clone()).or_insert(0);
            *n += 1;
            let id = RuleId(format!("{}-{}-{}", session.session_id, worker_id, n));
            let mut decoded = decoded.with_id(id).with_provenance(Provenance::Crowd).with_created_at(at);
            decoded.session_id = Some(session.session_id.clone());
            let sub = Submission { worker_id: worker_id.clone(), rule: decoded, submitted_at: at };
            match session.submissions.iter_mut().find(|s| &s.worker_id == worker_id) {
                Some(prev) => *prev = sub,
                None => session.submissions.push(sub),
            }
        }
        LogEvent::Finalized { rule, .. } => {
            open()?;
            let mut r = decode_document(&serde_json::to_value(rule).expect("envelope serializes"), catalog)?;
            r.session_id = rule.session_id.clone();
            session.final_rule = Some(r);
            session.state = SessionState::Closed;
        }
    }
    session.last_at = session.last_at.max(at);
    Ok(())
}

/// Rebuilds a session from its log.
pub fn replay(log: &str, catalog: &Catalog) -> Result<Session, SessionError> {
    let mut session: Option<Session> = None;
    for (i, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |message: String| SessionError::Log { path: format!("line {}", i + 1), message };
        let event: LogEvent = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        match (&mut session, &event) {
            (None, LogEvent::Opened { .. }) => session = Some(apply_open(&event)),
            (None, _) => return Err(bad("log must start with an `opened` event".into())),
            (Some(s), _) => apply_event(s, &event, catalog).map_err(|e| bad(e.to_string()))?,
        }
    }
    session.ok_or_else(|| SessionError::Log { path: "log".into(), message: "empty log".into() })
}

/// Reads and replays a log file.
pub fn replay_file(path: &Path, catalog: &Catalog) -> Result<Session, SessionError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SessionError::Log { path: path.display().to_string(), message: e.to_string() })?;
    replay(&text, catalog)
}

/// The rule `mode` would produce for a replayed session, stamped with the
/// time of its last event. The session itself is left untouched.
pub fn finalize_replayed(session: &Session, mode: &FinalizeMode, catalog: &Catalog) -> Result<Rule, SessionError> {
    final_rule(session, mode, session.last_at, catalog)
}

/// The submissions voting would run over: one per worker, in proposal order.
pub fn voting_pool(session: &Session) -> Vec<Submission> {
    ballot(&session.submissions).into_iter().cloned().collect()
}
