use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{Duration, NaiveDate};
use rulesmith_core::fixtures;
use rulesmith_core::render::render_rule;
use rulesmith_core::rule::decode_document;
use rulesmith_core::session::SteppingClock;
use rulesmith_server::{router, AppState, ServerOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

fn clock() -> Arc<SteppingClock> {
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(20, 0, 0).unwrap();
    Arc::new(SteppingClock::new(start, Duration::minutes(1)))
}

fn app(options: &ServerOptions) -> Router {
    router(AppState::new(fixtures::default_catalog(), clock(), options).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn gold_variant(id: usize) -> Value {
    let doc: Value = serde_json::from_str(fixtures::GOLD[id].1).unwrap();
    doc["variants"][0].clone()
}

#[tokio::test]
async fn catalog_document_is_served_verbatim() {
    let app = app(&ServerOptions::default());
    let (status, body) = call(&app, Method::GET, "/catalog", None).await;
    assert_eq!(status, StatusCode::OK);
    let expected: Value = serde_json::from_str(&fixtures::default_catalog().to_json()).unwrap();
    assert_eq!(body, expected);
}

#[tokio::test]
async fn render_matches_library_renderer() {
    let app = app(&ServerOptions::default());
    let doc: Value = serde_json::from_str(fixtures::LISTING_RULE).unwrap();
    let (status, body) = call(&app, Method::POST, "/render", Some(doc.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let c = fixtures::default_catalog();
    let rule = decode_document(&doc, &c).unwrap();
    assert_eq!(body["description"], render_rule(&rule, &c));
    let clauses = body["clauses"].as_array().unwrap();
    assert_eq!(clauses.len(), rule.ifs.len() + rule.thens.len());
    assert_eq!(clauses[0]["side"], "if");
    assert_eq!(clauses.last().unwrap()["side"], "then");
}

#[tokio::test]
async fn render_rejects_unknown_names() {
    let app = app(&ServerOptions::default());
    let doc = json!({"if": [{"name": "if-nothing", "condition": "if-nothing-at-all", "attributes": []}], "then": []});
    let (status, body) = call(&app, Method::POST, "/render", Some(doc)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "decode-error");
    assert!(body["path"].is_string());
}

#[tokio::test]
async fn validate_uses_given_time() {
    let app = app(&ServerOptions::default());
    let (status, body) = call(&app, Method::POST, "/validate", Some(json!({"rule": gold_variant(2), "now": "2018-01-01T20:00:00"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["ok"], true, "{body}");

    let mut empty = gold_variant(2);
    empty["then"] = json!([]);
    let (_, body) = call(&app, Method::POST, "/validate", Some(json!({"rule": empty}))).await;
    assert_eq!(body["ok"], false);
    assert!(!body["issues"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn session_workflow_over_http() {
    let app = app(&ServerOptions::default());
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"user_id": "u1", "capacity": 3}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["type"], "state");
    let id = body["session"]["session_id"].as_str().unwrap().to_string();

    for w in ["w1", "w2"] {
        let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/join"), Some(json!({"worker_id": w}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/messages"),
        Some(json!({"author": {"role": "user"}, "text": "wake me early if it snows"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["type"], "msg");

    for w in ["w1", "w2"] {
        let (status, body) =
            call(&app, Method::POST, &format!("/sessions/{id}/submit"), Some(json!({"worker_id": w, "rule": gold_variant(2)}))).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        assert_eq!(body["type"], "candidate");
    }
    let (status, body) =
        call(&app, Method::POST, &format!("/sessions/{id}/finalize"), Some(json!({"mode": {"kind": "voting"}}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["type"], "finalized");
    assert_eq!(body["rule"]["envelope"]["rule_id"], format!("{id}-final"));

    let (_, body) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(body["session"]["candidates"].as_array().unwrap().len(), 2);
    assert_eq!(body["session"]["messages"].as_array().unwrap().len(), 1);
    let (status, body) =
        call(&app, Method::POST, &format!("/sessions/{id}/submit"), Some(json!({"worker_id": "w1", "rule": gold_variant(2)}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "session-closed");

    let (_, ids) = call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(ids, json!([id]));
}

#[tokio::test]
async fn errors_carry_codes_and_statuses() {
    let app = app(&ServerOptions::default());
    let (status, body) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-session")));

    let (_, opened) = call(&app, Method::POST, "/sessions", Some(json!({"user_id": "u1"}))).await;
    let id = opened["session"]["session_id"].as_str().unwrap();
    let (status, body) =
        call(&app, Method::POST, &format!("/sessions/{id}/submit"), Some(json!({"worker_id": "w9", "rule": gold_variant(0)}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("not-joined")));

    let (status, body) = call(&app, Method::GET, "/engine/findings", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("no-engine")));
}

#[tokio::test]
async fn finalized_rules_reach_the_engine_and_conflicts_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let options = ServerOptions { outbox: Some(dir.path().join("outbox.ndjson")), ..ServerOptions::default() };
    let app = app(&options);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(fixtures::root().join("engine/duplicate-if.json")).unwrap()).unwrap();

    let mut engine_ids = Vec::new();
    for rule in doc["rules"].as_array().unwrap() {
        let (_, opened) = call(&app, Method::POST, "/sessions", Some(json!({"user_id": "u1"}))).await;
        let id = opened["session"]["session_id"].as_str().unwrap().to_string();
        call(&app, Method::POST, &format!("/sessions/{id}/join"), Some(json!({"worker_id": "w1"}))).await;
        let (_, cand) =
            call(&app, Method::POST, &format!("/sessions/{id}/submit"), Some(json!({"worker_id": "w1", "rule": rule}))).await;
        let rule_id = cand["candidate"]["rule_id"].clone();
        let (status, fin) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/finalize"),
            Some(json!({"mode": {"kind": "user_pick", "rule_id": rule_id}})),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{fin}");
        assert!(fin.get("delivery_error").is_none(), "{fin}");
        engine_ids.push(fin["engine_rule_id"].as_str().unwrap().to_string());
    }

    let (status, findings) = call(&app, Method::GET, "/engine/findings", None).await;
    assert_eq!(status, StatusCode::OK);
    let dups: Vec<&Value> = findings.as_array().unwrap().iter().filter(|f| f["kind"] == "duplicate_then").collect();
    assert_eq!(dups.len(), 1, "{findings}");
    assert_eq!(dups[0]["resolution"], "pending_user_confirmation");
    let finding = dups[0]["id"].as_str().unwrap();

    let (status, resolved) =
        call(&app, Method::POST, &format!("/engine/findings/{finding}"), Some(json!({"decision": "confirm_subsume"}))).await;
    assert_eq!(status, StatusCode::OK, "{resolved}");
    assert_eq!(resolved["resolution"], "subsumed_b");
    let (status, again) =
        call(&app, Method::POST, &format!("/engine/findings/{finding}"), Some(json!({"decision": "keep"}))).await;
    assert_eq!((status, again["code"].as_str()), (StatusCode::CONFLICT, Some("already-resolved")));

    let (_, state) = call(&app, Method::GET, "/engine/state", None).await;
    let subsumed = resolved["rule_b"].as_str().unwrap();
    assert!(engine_ids.iter().any(|id| id == subsumed));
    assert_eq!(state["kb"]["rules"][subsumed]["status"], "subsumed", "{state}");
}
