//! Single-writer engine loop. One thread owns the [`Engine`]; everything
//! else talks to it through a cloneable [`EngineHandle`].

use std::sync::mpsc;
use std::thread;

use super::{AddOutcome, ConflictFinding, Engine, EngineError, EngineState, SensorSnapshot, TickReport, UserDecision};
use crate::rule::Rule;
use crate::time::Timestamp;

type Reply<T> = mpsc::Sender<Result<T, EngineError>>;

enum Command {
    Add(Rule, Timestamp, Reply<AddOutcome>),
    Tick(SensorSnapshot, Reply<TickReport>),
    Resolve(String, UserDecision, Reply<ConflictFinding>),
    State(mpsc::Sender<EngineState>),
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("the engine loop has stopped")]
    Stopped,
}

#[derive(Clone)]
pub struct EngineHandle {
    tx: mpsc::Sender<Command>,
}

impl EngineHandle {
    /// Starts the loop. It stops once every handle has been dropped.
    pub fn spawn(mut engine: Engine) -> (EngineHandle, thread::JoinHandle<()>) {
        let (tx, rx) = mpsc::channel::<Command>();
        let join = thread::spawn(move || {
            for cmd in rx {
                // a caller that gave up on its reply is not an error
                match cmd {
                    Command::Add(rule, now, reply) => {
                        let _ = reply.send(engine.add_rule(rule, now));
                    }
                    Command::Tick(snapshot, reply) => {
                        let _ = reply.send(engine.tick(&snapshot));
                    }
                    Command::Resolve(id, decision, reply) => {
                        let _ = reply.send(engine.resolve_conflict(&id, decision));
                    }
                    Command::State(reply) => {
                        let _ = reply.send(engine.state().clone());
                    }
                }
            }
        });
        (EngineHandle { tx }, join)
    }

    fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ServiceError> {
        let (reply, rx) = mpsc::channel();
        self.tx.send(make(reply)).map_err(|_| ServiceError::Stopped)?;
        Ok(rx.recv().map_err(|_| ServiceError::Stopped)??)
    }

    pub fn add_rule(&self, rule: Rule, now: Timestamp) -> Result<AddOutcome, ServiceError> {
        self.call(|r| Command::Add(rule, now, r))
    }

    pub fn tick(&self, snapshot: SensorSnapshot) -> Result<TickReport, ServiceError> {
        self.call(|r| Command::Tick(snapshot, r))
    }

    pub fn resolve_conflict(&self, finding_id: &str, decision: UserDecision) -> Result<ConflictFinding, ServiceError> {
        self.call(|r| Command::Resolve(finding_id.to_string(), decision, r))
    }

    pub fn state(&self) -> Result<EngineState, ServiceError> {
        let (reply, rx) = mpsc::channel();
        self.tx.send(Command::State(reply)).map_err(|_| ServiceError::Stopped)?;
        rx.recv().map_err(|_| ServiceError::Stopped)
    }
}
