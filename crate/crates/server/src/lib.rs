//! HTTP and WebSocket front end for the session service, the catalog, the
//! renderer, the validator and the rule engine.
//!
//! Every session operation is one [`ClientMessage`] answered by one
//! [`ServerEvent`], whether it arrives over the socket or over HTTP. Socket
//! clients also receive the events other participants cause in the sessions
//! they have opened, joined or asked about.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rulesmith_core::catalog::Catalog;
use rulesmith_core::engine::service::EngineHandle;
use rulesmith_core::engine::{Engine, EngineConfig, EngineError, OutboxFile, UserDecision};
use rulesmith_core::render::{render_clause, render_rule};
use rulesmith_core::rule::decode_document;
use rulesmith_core::session::{Author, ClientMessage, Clock, FinalizeMode, ServerEvent, SessionService, SystemClock};
use rulesmith_core::time::Timestamp;
use rulesmith_core::validator::validate_rule;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tracing::{debug, info};

/// An event together with the socket that caused it, if any.
#[derive(Debug, Clone)]
struct Published {
    origin: Option<u64>,
    event: ServerEvent,
}

#[derive(Clone)]
pub struct AppState {
    service: Arc<SessionService>,
    catalog: Arc<Catalog>,
    clock: Arc<dyn Clock>,
    engine: Option<EngineHandle>,
    events: broadcast::Sender<Published>,
    sockets: Arc<std::sync::atomic::AtomicU64>,
}

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Session logs are written here and restored on start.
    pub log_dir: Option<PathBuf>,
    /// Runs an engine that receives finalized rules.
    pub engine: bool,
    pub engine_store: Option<PathBuf>,
    pub outbox: Option<PathBuf>,
}

#[derive(Debug)]
pub enum StartError {
    Session(rulesmith_core::session::SessionError),
    Engine(EngineError),
    Outbox(std::io::Error),
}

impl std::fmt::Display for StartError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartError::Session(e) => write!(f, "session store: {e}"),
            StartError::Engine(e) => write!(f, "engine: {e}"),
            StartError::Outbox(e) => write!(f, "outbox: {e}"),
        }
    }
}

impl std::error::Error for StartError {}

impl AppState {
    pub fn new(catalog: Catalog, clock: Arc<dyn Clock>, options: &ServerOptions) -> Result<AppState, StartError> {
        let catalog = Arc::new(catalog);
        let mut service = SessionService::new(catalog.clone(), clock.clone());
        if let Some(dir) = &options.log_dir {
            service = service.with_log_dir(dir).map_err(StartError::Session)?;
        }
        let engine = if options.engine || options.engine_store.is_some() || options.outbox.is_some() {
            let mut engine = Engine::new((*catalog).clone(), EngineConfig::default());
            if let Some(store) = &options.engine_store {
                engine = engine.with_store(store).map_err(StartError::Engine)?;
            }
            if let Some(outbox) = &options.outbox {
                engine = engine.with_dispatcher(Box::new(OutboxFile::open(outbox).map_err(StartError::Outbox)?));
            }
            let (handle, _join) = EngineHandle::spawn(engine);
            service = service.with_rule_sink(Arc::new(handle.clone()));
            Some(handle)
        } else {
            None
        };
        let (events, _) = broadcast::channel(256);
        Ok(AppState {
            service: Arc::new(service),
            catalog,
            clock,
            engine,
            events,
            sockets: Arc::new(std::sync::atomic::AtomicU64::new(0)),
        })
    }

    /// Default state: wall clock, no logs, no engine.
    pub fn in_memory(catalog: Catalog) -> AppState {
        AppState::new(catalog, Arc::new(SystemClock), &ServerOptions::default()).expect("no files involved")
    }

    pub fn service(&self) -> &SessionService {
        &self.service
    }

    /// Handles one request and publishes what other participants should see.
    async fn dispatch(&self, origin: Option<u64>, msg: ClientMessage) -> ServerEvent {
        let joined = match &msg {
            ClientMessage::Join { session_id, worker_id } => Some((session_id.clone(), worker_id.clone())),
            _ => None,
        };
        let service = self.service.clone();
        let reply = tokio::task::spawn_blocking(move || service.handle(msg))
            .await
            .unwrap_or_else(|e| ServerEvent::Error { code: "internal".into(), message: e.to_string(), report: None });
        let shared = match (&reply, joined) {
            (ServerEvent::State { .. }, Some((session_id, worker_id))) => Some(ServerEvent::Joined { session_id, worker_id }),
            (ServerEvent::Msg { .. } | ServerEvent::Candidate { .. } | ServerEvent::Finalized { .. }, _) => Some(reply.clone()),
            _ => None,
        };
        if let Some(event) = shared {
            // no receivers is fine
            let _ = self.events.send(Published { origin, event });
        }
        reply
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/catalog", get(catalog))
        .route("/render", post(render))
        .route("/validate", post(validate))
        .route("/sessions", get(list_sessions).post(open_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/join", post(join))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/engine/state", get(engine_state))
        .route("/engine/findings", get(engine_findings))
        .route("/engine/findings/{id}", post(resolve_finding))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    info!(addr = ?listener.local_addr().ok(), "rulesmith server listening");
    axum::serve(listener, router(state)).await
}

fn error_status(code: &str) -> StatusCode {
    match code {
        "unknown-session" | "unknown-rule" | "unknown-finding" | "no-engine" => StatusCode::NOT_FOUND,
        "session-closed" | "session-full" | "already-resolved" => StatusCode::CONFLICT,
        "decode-error" | "validation-failed" | "no-submissions" | "merge-failed" | "empty-text" | "bad-capacity"
        | "not-joined" => StatusCode::UNPROCESSABLE_ENTITY,
        "bad-request" => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error(code: &str, message: impl Into<String>) -> Response {
    let body = ServerEvent::Error { code: code.to_string(), message: message.into(), report: None };
    (error_status(code), Json(body)).into_response()
}

fn reply(event: ServerEvent, ok: StatusCode) -> Response {
    match &event {
        ServerEvent::Error { code, .. } => (error_status(code), Json(event.clone())).into_response(),
        _ => (ok, Json(event)).into_response(),
    }
}

async fn catalog(State(state): State<AppState>) -> Response {
    ([(axum::http::header::CONTENT_TYPE, "application/json")], state.catalog.to_json()).into_response()
}

#[derive(Debug, Serialize)]
struct ClauseText {
    side: &'static str,
    index: usize,
    text: String,
}

#[derive(Debug, Serialize)]
struct Rendered {
    description: String,
    clauses: Vec<ClauseText>,
}

async fn render(State(state): State<AppState>, Json(doc): Json<Value>) -> Response {
    let rule = match decode_document(&doc, &state.catalog) {
        Ok(r) => r,
        Err(e) => return decode_error(e),
    };
    let mut clauses = Vec::new();
    for (side, list) in [("if", &rule.ifs), ("then", &rule.thens)] {
        for (index, c) in list.iter().enumerate() {
            clauses.push(ClauseText { side, index, text: render_clause(c, &state.catalog) });
        }
    }
    Json(Rendered { description: render_rule(&rule, &state.catalog), clauses }).into_response()
}

fn decode_error(e: rulesmith_core::rule::DecodeError) -> Response {
    let body = json!({"type": "error", "code": "decode-error", "message": e.to_string(), "path": e.path});
    (StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateRequest {
    rule: Value,
    /// Defaults to the server clock.
    #[serde(default)]
    now: Option<Timestamp>,
}

async fn validate(State(state): State<AppState>, Json(req): Json<ValidateRequest>) -> Response {
    let rule = match decode_document(&req.rule, &state.catalog) {
        Ok(r) => r,
        Err(e) => return decode_error(e),
    };
    let now = req.now.unwrap_or_else(|| state.clock.now());
    Json(validate_rule(&rule, &state.catalog, now)).into_response()
}

async fn list_sessions(State(state): State<AppState>) -> Response {
    Json(state.service.session_ids()).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenRequest {
    user_id: String,
    #[serde(default = "default_capacity")]
    capacity: usize,
}

fn default_capacity() -> usize {
    rulesmith_core::session::DEFAULT_CAPACITY
}

async fn open_session(State(state): State<AppState>, Json(req): Json<OpenRequest>) -> Response {
    let msg = ClientMessage::Open { user_id: req.user_id, capacity: req.capacity };
    reply(state.dispatch(None, msg).await, StatusCode::CREATED)
}

async fn session_state(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    reply(state.dispatch(None, ClientMessage::State { session_id: id }).await, StatusCode::OK)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinRequest {
    worker_id: String,
}

async fn join(State(state): State<AppState>, Path(id): Path<String>, Json(req): Json<JoinRequest>) -> Response {
    let msg = ClientMessage::Join { session_id: id, worker_id: req.worker_id };
    reply(state.dispatch(None, msg).await, StatusCode::OK)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRequest {
    author: Author,
    text: String,
}

async fn post_message(State(state): State<AppState>, Path(id): Path<String>, Json(req): Json<MessageRequest>) -> Response {
    let msg = ClientMessage::Msg { session_id: id, author: req.author, text: req.text };
    reply(state.dispatch(None, msg).await, StatusCode::CREATED)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitRequest {
    worker_id: String,
    rule: Value,
}

async fn submit(State(state): State<AppState>, Path(id): Path<String>, Json(req): Json<SubmitRequest>) -> Response {
    let msg = ClientMessage::Submit { session_id: id, worker_id: req.worker_id, rule: req.rule };
    reply(state.dispatch(None, msg).await, StatusCode::CREATED)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalizeRequest {
    mode: FinalizeMode,
}

async fn finalize(State(state): State<AppState>, Path(id): Path<String>, Json(req): Json<FinalizeRequest>) -> Response {
    let msg = ClientMessage::Finalize { session_id: id, mode: req.mode };
    reply(state.dispatch(None, msg).await, StatusCode::OK)
}

async fn engine_call<T, F>(state: &AppState, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&EngineHandle) -> Result<T, rulesmith_core::engine::service::ServiceError> + Send + 'static,
{
    let Some(handle) = state.engine.clone() else { return error("no-engine", "this server runs without an engine") };
    match tokio::task::spawn_blocking(move || f(&handle)).await {
        Ok(Ok(value)) => Json(value).into_response(),
        Ok(Err(rulesmith_core::engine::service::ServiceError::Engine(e))) => {
            let code = match e {
                EngineError::UnknownFinding(_) => "unknown-finding",
                EngineError::AlreadyResolved(_) => "already-resolved",
                EngineError::UnknownRule(_) => "unknown-rule",
                _ => "engine-error",
            };
            error(code, e.to_string())
        }
        Ok(Err(e)) => error("engine-error", e.to_string()),
        Err(e) => error("internal", e.to_string()),
    }
}

async fn engine_state(State(state): State<AppState>) -> Response {
    engine_call(&state, |h| h.state()).await
}

async fn engine_findings(State(state): State<AppState>) -> Response {
    engine_call(&state, |h| h.state().map(|s| s.kb.findings)).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveRequest {
    decision: UserDecision,
}

async fn resolve_finding(State(state): State<AppState>, Path(id): Path<String>, Json(req): Json<ResolveRequest>) -> Response {
    engine_call(&state, move |h| h.resolve_conflict(&id, req.decision)).await
}

async fn ws_upgrade(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| socket_loop(state, socket))
}

fn session_of(msg: &ClientMessage) -> Option<&str> {
    match msg {
        ClientMessage::Open { .. } => None,
        ClientMessage::Join { session_id, .. }
        | ClientMessage::Msg { session_id, .. }
        | ClientMessage::Submit { session_id, .. }
        | ClientMessage::Finalize { session_id, .. }
        | ClientMessage::State { session_id } => Some(session_id),
    }
}

async fn send(socket: &mut WebSocket, event: &ServerEvent) -> bool {
    let text = serde_json::to_string(event).expect("server events serialize");
    socket.send(WsMessage::Text(text.into())).await.is_ok()
}

async fn socket_loop(state: AppState, mut socket: WebSocket) {
    let me = state.sockets.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let mut events = state.events.subscribe();
    let mut sessions: BTreeSet<String> = BTreeSet::new();
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let Some(Ok(frame)) = incoming else { break };
                let text = match frame {
                    WsMessage::Text(t) => t.to_string(),
                    WsMessage::Close(_) => break,
                    _ => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(msg) => {
                        if let Some(id) = session_of(&msg) {
                            sessions.insert(id.to_string());
                        }
                        state.dispatch(Some(me), msg).await
                    }
                    Err(e) => ServerEvent::Error { code: "bad-request".into(), message: e.to_string(), report: None },
                };
                if let ServerEvent::State { session } = &reply {
                    sessions.insert(session.session_id.clone());
                }
                if !send(&mut socket, &reply).await {
                    break;
                }
            }
            published = events.recv() => {
                match published {
                    Ok(p) => {
                        let mine = p.event.session_id().is_some_and(|s| sessions.contains(s));
                        if mine && p.origin != Some(me) && !send(&mut socket, &p.event).await {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => debug!(n, "socket fell behind; events dropped"),
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }
}
