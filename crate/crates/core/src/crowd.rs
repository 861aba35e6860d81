//! Seat filling for sessions. A [`Recruiter`] supplies workers for a
//! session; the shipped one hands out scripted bots that either replay a
//! transcript of lines and rules or submit a simulated attempt at a gold
//! scenario. [`run_crowd`] drives a whole session with them, headless.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::eval::shipped_gold;
use crate::rule::encode_rule;
use crate::session::{Author, ClientMessage, FinalizeMode, ServerEvent, SessionService, DEFAULT_CAPACITY};
use crate::sim::{rng_for, sample_worker_rule, WorkerErrorModel};

/// A participant that reacts to session events with protocol requests.
pub trait Worker: Send {
    fn worker_id(&self) -> &str;
    fn on_event(&mut self, event: &ServerEvent) -> Vec<ClientMessage>;
}

pub trait Recruiter {
    /// Up to `seats` workers for `session_id`.
    fn recruit(&mut self, session_id: &str, seats: usize) -> Result<Vec<Box<dyn Worker>>, CrowdError>;
}

/// One scripted action. It becomes due once the user has posted at least
/// `after_user` messages; a worker performs its due actions in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    #[serde(default)]
    pub after_user: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub say: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submit: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePolicy {
    pub scenario: String,
    #[serde(default)]
    pub model: WorkerErrorModel,
    /// Random stream; defaults to the seat index.
    #[serde(default)]
    pub stream: Option<usize>,
    #[serde(default)]
    pub after_user: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerScript {
    pub worker_id: String,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SamplePolicy>,
}

/// A headless session: the user's lines, the seats, and how it ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrowdScript {
    pub user_id: String,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default)]
    pub user: Vec<String>,
    pub workers: Vec<WorkerScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalize: Option<FinalizeMode>,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

#[derive(Debug, Error)]
pub enum CrowdError {
    #[error("invalid crowd script: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker `{worker}`: step {step} must have exactly one of `say` and `submit`")]
    BadStep { worker: String, step: usize },
    #[error("worker `{0}` has both a script and a sample policy")]
    BothPolicies(String),
    #[error("worker `{worker}`: unknown scenario `{scenario}`")]
    UnknownScenario { worker: String, scenario: String },
    #[error("the session refused a request: {code}: {message}")]
    Refused { code: String, message: String },
    #[error("workers kept talking after {0} rounds")]
    Runaway(usize),
}

impl CrowdScript {
    pub fn from_json(text: &str) -> Result<CrowdScript, CrowdError> {
        let script: CrowdScript = serde_json::from_str(text)?;
        for w in &script.workers {
            if w.sample.is_some() && !w.script.is_empty() {
                return Err(CrowdError::BothPolicies(w.worker_id.clone()));
            }
            for (step, s) in w.script.iter().enumerate() {
                if s.say.is_some() == s.submit.is_some() {
                    return Err(CrowdError::BadStep { worker: w.worker_id.clone(), step });
                }
            }
        }
        Ok(script)
    }
}

/// Bot that follows a [`WorkerScript`].
pub struct ScriptedWorker {
    worker_id: String,
    session_id: String,
    steps: Vec<ScriptStep>,
    next: usize,
    user_lines: usize,
    joined: bool,
}

impl ScriptedWorker {
    pub fn new(session_id: &str, worker_id: &str, steps: Vec<ScriptStep>) -> ScriptedWorker {
        ScriptedWorker {
            worker_id: worker_id.to_string(),
            session_id: session_id.to_string(),
            steps,
            next: 0,
            user_lines: 0,
            joined: false,
        }
    }
}

impl Worker for ScriptedWorker {
    fn worker_id(&self) -> &str {
        &self.worker_id
    }

    fn on_event(&mut self, event: &ServerEvent) -> Vec<ClientMessage> {
        if event.session_id() != Some(self.session_id.as_str()) {
            return Vec::new();
        }
        match event {
            ServerEvent::Joined { worker_id, .. } if *worker_id == self.worker_id => self.joined = true,
            ServerEvent::Msg { message, .. } if message.author == Author::User => self.user_lines += 1,
            ServerEvent::Finalized { .. } => self.next = self.steps.len(),
            _ => {}
        }
        let mut out = Vec::new();
        while self.joined && self.next < self.steps.len() && self.steps[self.next].after_user <= self.user_lines {
            let step = &self.steps[self.next];
            self.next += 1;
            let session_id = self.session_id.clone();
            if let Some(text) = &step.say {
                out.push(ClientMessage::Msg { session_id, author: Author::Worker(self.worker_id.clone()), text: text.clone() });
            } else if let Some(rule) = &step.submit {
                out.push(ClientMessage::Submit { session_id, worker_id: self.worker_id.clone(), rule: rule.clone() });
            }
        }
        out
    }
}

/// Recruits the workers of a [`CrowdScript`], in order, turning sample
/// policies into one scripted submission each.
pub struct ScriptRecruiter<'a> {
    workers: &'a [WorkerScript],
    catalog: &'a Catalog,
    recruited: usize,
}

impl<'a> ScriptRecruiter<'a> {
    pub fn new(workers: &'a [WorkerScript], catalog: &'a Catalog) -> ScriptRecruiter<'a> {
        ScriptRecruiter { workers, catalog, recruited: 0 }
    }

    fn steps(&self, seat: usize, w: &WorkerScript) -> Result<Vec<ScriptStep>, CrowdError> {
        let Some(policy) = &w.sample else { return Ok(w.script.clone()) };
        let golds = shipped_gold(self.catalog);
        let unknown = || CrowdError::UnknownScenario { worker: w.worker_id.clone(), scenario: policy.scenario.clone() };
        let index = golds.iter().position(|g| g.scenario_id == policy.scenario).ok_or_else(unknown)?;
        let mut rng = rng_for(policy.model.seed, index, policy.stream.unwrap_or(seat));
        let rule = sample_worker_rule(&golds[index].variants[0], &policy.model, self.catalog, &mut rng);
        Ok(vec![ScriptStep { after_user: policy.after_user, say: None, submit: Some(encode_rule(&rule).to_value()) }])
    }
}

impl Recruiter for ScriptRecruiter<'_> {
    fn recruit(&mut self, session_id: &str, seats: usize) -> Result<Vec<Box<dyn Worker>>, CrowdError> {
        let mut out: Vec<Box<dyn Worker>> = Vec::new();
        while out.len() < seats && self.recruited < self.workers.len() {
            let seat = self.recruited;
            let w = &self.workers[seat];
            self.recruited += 1;
            out.push(Box::new(ScriptedWorker::new(session_id, &w.worker_id, self.steps(seat, w)?)));
        }
        Ok(out)
    }
}

/// What a headless session produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdOutcome {
    pub session_id: String,
    /// Every event, in the order participants saw it.
    pub events: Vec<ServerEvent>,
    /// Worker requests the session turned down, e.g. a sampled rule that
    /// lost its whole IF side.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refused: Vec<Refusal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized: Option<ServerEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refusal {
    pub worker_id: String,
    pub code: String,
    pub message: String,
}

const MAX_ROUNDS: usize = 10_000;

/// Opens a session, seats the recruited workers, posts the user's lines one
/// at a time and lets the workers react to everything until they fall
/// silent, then finalizes if the script says how.
pub fn run_crowd(
    service: &SessionService,
    script: &CrowdScript,
    recruiter: &mut dyn Recruiter,
) -> Result<CrowdOutcome, CrowdError> {
    let opened = checked(service.handle(ClientMessage::Open { user_id: script.user_id.clone(), capacity: script.capacity }))?;
    let session_id = opened.session_id().unwrap_or_default().to_string();
    let mut workers = recruiter.recruit(&session_id, script.capacity)?;
    let mut run = Run { service, workers: &mut workers, events: Vec::new(), refused: Vec::new(), rounds: 0 };

    let ids: Vec<String> = run.workers.iter().map(|w| w.worker_id().to_string()).collect();
    for worker_id in ids {
        checked(service.handle(ClientMessage::Join { session_id: session_id.clone(), worker_id: worker_id.clone() }))?;
        run.publish(ServerEvent::Joined { session_id: session_id.clone(), worker_id })?;
    }
    for line in &script.user {
        let msg = ClientMessage::Msg { session_id: session_id.clone(), author: Author::User, text: line.clone() };
        let event = checked(service.handle(msg))?;
        run.publish(event)?;
    }
    let finalized = match &script.finalize {
        Some(mode) => {
            let event = checked(service.handle(ClientMessage::Finalize { session_id: session_id.clone(), mode: mode.clone() }))?;
            run.publish(event.clone())?;
            Some(event)
        }
        None => None,
    };
    Ok(CrowdOutcome { session_id, events: run.events, refused: run.refused, finalized })
}

struct Run<'a> {
    service: &'a SessionService,
    workers: &'a mut Vec<Box<dyn Worker>>,
    events: Vec<ServerEvent>,
    refused: Vec<Refusal>,
    rounds: usize,
}

impl Run<'_> {
    /// Delivers `event` and everything it provokes, breadth first.
    fn publish(&mut self, event: ServerEvent) -> Result<(), CrowdError> {
        let mut queue = std::collections::VecDeque::from([event]);
        while let Some(event) = queue.pop_front() {
            self.rounds += 1;
            if self.rounds > MAX_ROUNDS {
                return Err(CrowdError::Runaway(MAX_ROUNDS));
            }
            let mut requests = Vec::new();
            for w in self.workers.iter_mut() {
                let id = w.worker_id().to_string();
                requests.extend(w.on_event(&event).into_iter().map(|r| (id.clone(), r)));
            }
            self.events.push(event);
            for (worker_id, req) in requests {
                match self.service.handle(req) {
                    ServerEvent::Error { code, message, .. } => self.refused.push(Refusal { worker_id, code, message }),
                    reply => queue.push_back(reply),
                }
            }
        }
        Ok(())
    }
}

fn checked(event: ServerEvent) -> Result<ServerEvent, CrowdError> {
    match event {
        ServerEvent::Error { code, message, .. } => Err(CrowdError::Refused { code, message }),
        other => Ok(other),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use chrono::Duration;

    use super::*;
    use crate::fixtures;
    use crate::session::{SessionState, SteppingClock};
    use crate::time::epoch;

    fn service() -> SessionService {
        let c = Arc::new(fixtures::default_catalog());
        SessionService::new(c, Arc::new(SteppingClock::new(epoch(), Duration::minutes(1))))
    }

    fn gold_doc(ix: usize) -> Value {
        let doc: Value = serde_json::from_str(fixtures::GOLD[ix].1).unwrap();
        doc["variants"][0].clone()
    }

    fn script(finalize: Option<FinalizeMode>) -> CrowdScript {
        CrowdScript {
            user_id: "u1".into(),
            capacity: 2,
            user: vec!["tell me the Steelers news".into(), "thanks".into()],
            workers: vec![
                WorkerScript {
                    worker_id: "w1".into(),
                    script: vec![
                        ScriptStep { after_user: 1, say: Some("on it".into()), submit: None },
                        ScriptStep { after_user: 1, say: None, submit: Some(gold_doc(0)) },
                    ],
                    sample: None,
                },
                WorkerScript {
                    worker_id: "w2".into(),
                    script: vec![],
                    sample: Some(SamplePolicy {
                        scenario: "S1".into(),
                        model: WorkerErrorModel::perfect(7),
                        stream: None,
                        after_user: 2,
                    }),
                },
            ],
            finalize,
        }
    }

    #[test]
    fn scripted_bots_fill_a_session() {
        let svc = service();
        let c = fixtures::default_catalog();
        let s = script(Some(FinalizeMode::Voting { threshold: 2 }));
        let out = run_crowd(&svc, &s, &mut ScriptRecruiter::new(&s.workers, &c)).unwrap();
        let session = svc.snapshot(&out.session_id).unwrap();
        assert_eq!(session.worker_ids, ["w1", "w2"]);
        assert_eq!(session.messages.len(), 3);
        assert_eq!(session.messages[1].text, "on it");
        assert_eq!(session.submissions.len(), 2);
        assert_eq!(session.state, SessionState::Closed);
        assert!(matches!(out.finalized, Some(ServerEvent::Finalized { .. })));
        assert!(out.refused.is_empty());
    }

    #[test]
    fn refused_submissions_do_not_stop_the_session() {
        let svc = service();
        let c = fixtures::default_catalog();
        let mut s = script(None);
        s.workers[1].sample.as_mut().unwrap().model.p_drop_sensor = 1.0;
        let out = run_crowd(&svc, &s, &mut ScriptRecruiter::new(&s.workers, &c)).unwrap();
        assert_eq!(out.refused.len(), 1);
        assert_eq!((out.refused[0].worker_id.as_str(), out.refused[0].code.as_str()), ("w2", "validation-failed"));
        assert_eq!(svc.snapshot(&out.session_id).unwrap().submissions.len(), 1);
    }

    #[test]
    fn recruiting_stops_at_capacity() {
        let c = fixtures::default_catalog();
        let s = script(None);
        let mut r = ScriptRecruiter::new(&s.workers, &c);
        assert_eq!(r.recruit("x", 1).unwrap().len(), 1);
        assert_eq!(r.recruit("x", 5).unwrap().len(), 1);
        assert!(r.recruit("x", 5).unwrap().is_empty());
    }

    #[test]
    fn malformed_steps_are_rejected() {
        let text = r#"{"user_id":"u","workers":[{"worker_id":"w1","script":[{"say":"a","submit":{}}]}]}"#;
        assert!(matches!(CrowdScript::from_json(text), Err(CrowdError::BadStep { step: 0, .. })));
    }
}
