#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use procassist::config::AppConfig;
use procassist::sim::{generate_log, SkillProfile};
use procassist::{ClockTime, Conversation, TaskDef};
use procassist_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn state_with(config: AppConfig) -> Arc<AppState> {
    Arc::new(AppState::from_config(&config).unwrap())
}

pub fn app() -> (Router, Arc<AppState>) {
    let state = state_with(AppConfig::default());
    (router(state.clone()), state)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => builder.body(Body::from(b.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

pub async fn wearable(app: &Router, id: &str, activity: &str, time: &str) -> (StatusCode, Value) {
    let body = json!({ "speaker": "Wearable", "text": activity, "client_time": time });
    call(app, "POST", &format!("/v1/sessions/{id}/events"), Some(body)).await
}

pub async fn transcript(app: &Router, id: &str) -> Value {
    let (status, v) = call(app, "GET", &format!("/v1/sessions/{id}/transcript"), None).await;
    assert_eq!(status, StatusCode::OK);
    v
}

/// Wearable log of a mistake-free run starting at 10:00:00 AM.
pub fn perfect_log() -> Conversation {
    let task = TaskDef::table_assembly();
    let profile = SkillProfile::default().with_skill(1.0);
    generate_log(&profile, task.targets(), 3, ClockTime::from_hms(10, 0, 0).unwrap()).unwrap().conversation
}
