#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use senscomp_core::kb::load_kb;
use senscomp_core::KnowledgeBase;
use senscomp_service::{router, AppState, Config};
use serde_json::Value;
use tower::ServiceExt;

pub fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../kb").join(name)
}

pub fn example_kb() -> KnowledgeBase {
    load_kb(shipped("example.kb.json")).unwrap()
}

pub fn app(config: Config, kb: KnowledgeBase) -> (Arc<AppState>, Router) {
    let state = AppState::new(config, kb);
    let r = router(state.clone());
    (state, r)
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Value,
}

impl Reply {
    pub fn code(&self) -> &str {
        self.body["error"]["code"].as_str().unwrap_or("")
    }
}

pub async fn call(app: &Router, method: Method, path: &str, body: Option<Value>) -> Reply {
    call_with(app, method, path, body, None).await
}

pub async fn call_with(app: &Router, method: Method, path: &str, body: Option<Value>, token: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    Reply { status, headers, body }
}

pub async fn new_session(app: &Router) -> String {
    let r = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(r.status, StatusCode::CREATED);
    r.body["session_id"].as_str().unwrap().to_owned()
}

/// Answers both questions and selects the disease monitoring task.
pub async fn phytophtora_session(app: &Router) -> (String, Value) {
    let id = new_session(app).await;
    for (q, a) in [("q-domain", "agriculture"), ("q-goal", "disease-monitoring")] {
        let r = call(
            app,
            Method::POST,
            &format!("/sessions/{id}/answers"),
            Some(serde_json::json!({"question_id": q, "answer": a})),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK, "{:?}", r.body);
    }
    let r = call(
        app,
        Method::POST,
        &format!("/sessions/{id}/task"),
        Some(serde_json::json!({"task_id": "task-phytophtora"})),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{:?}", r.body);
    (id, r.body)
}

fn mask(value: &mut Value, id: &str) {
    match value {
        Value::String(s) if s.contains(id) => *s = s.replace(id, "<session>"),
        Value::Array(items) => items.iter_mut().for_each(|v| mask(v, id)),
        Value::Object(map) => map.values_mut().for_each(|v| mask(v, id)),
        _ => {}
    }
}

/// The scripted end-to-end flow over the example KB, one entry per request,
/// with the random session id masked.
pub async fn scripted_transcript(app: &Router) -> Value {
    use serde_json::json;
    let mut log = Vec::new();
    let mut step = |method: &Method, path: &str, body: &Option<Value>, reply: &Reply| {
        let mut entry = json!({
            "request": {"method": method.as_str(), "path": path, "body": body},
            "response": {"status": reply.status.as_u16(), "body": reply.body},
        });
        log.push(std::mem::take(&mut entry));
    };

    let created = call(app, Method::POST, "/sessions", None).await;
    step(&Method::POST, "/sessions", &None, &created);
    let id = created.body["session_id"].as_str().unwrap().to_owned();

    let mut script: Vec<(Method, String, Option<Value>)> = vec![
        (Method::GET, format!("/sessions/{id}/questions"), None),
        (Method::GET, format!("/sessions/{id}/questions/q-domain/answers"), None),
        (
            Method::POST,
            format!("/sessions/{id}/answers"),
            Some(json!({"question_id": "q-domain", "answer": "agriculture"})),
        ),
        (
            Method::POST,
            format!("/sessions/{id}/answers"),
            Some(json!({"question_id": "q-goal", "answer": "disease-monitoring"})),
        ),
        (Method::GET, format!("/sessions/{id}/tasks"), None),
        (
            Method::POST,
            format!("/sessions/{id}/task"),
            Some(json!({"task_id": "task-phytophtora"})),
        ),
        (Method::GET, format!("/sessions/{id}/context"), None),
        (
            Method::POST,
            format!("/sessions/{id}/weights"),
            Some(json!({"accuracy": 3, "energy": 1})),
        ),
    ];
    let mut hash = None;
    for (method, path, body) in script.drain(..) {
        let reply = call(app, method.clone(), &path, body.clone()).await;
        if path.ends_with("/task") {
            hash = reply.body["solutions"][0]["hash"].as_str().map(str::to_owned);
        }
        step(&method, &path, &body, &reply);
    }
    let path = format!("/sessions/{id}/plan");
    let body = Some(json!({"solution_hash": hash.expect("a solution"), "extras": ["location"]}));
    let reply = call(app, Method::POST, &path, body.clone()).await;
    step(&Method::POST, &path, &body, &reply);

    let mut out = Value::Array(log);
    mask(&mut out, &id);
    out
}
