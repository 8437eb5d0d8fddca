use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use feaslab_service::{router, AppState};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::Null)
    };
    (status, v)
}

fn create_body(theta: f64) -> Value {
    json!({
        "spec": {"k": 3, "s": 1, "alpha": 0.05, "theta": theta, "expect_more_passes": true},
        "source": {"kind": "synthetic", "p": [[0.05], [0.3], [0.6]]},
        "thresholds": [[0.3]],
        "seed": 11
    })
}

fn app(dir: &std::path::Path) -> Router {
    router(AppState::open(dir).unwrap())
}

async fn create(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", Some(create_body(1.5))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let (status, v) = call(&app(dir.path()), "GET", "/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn create_returns_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, v) = call(&app, "POST", "/v1/sessions", Some(create_body(1.5))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["version"], "feaslab.session.v1");
    assert_eq!(v["status"], "idle");
    assert_eq!(v["state"]["run_seed"], "11");
    let id = v["id"].as_str().unwrap();
    assert!(dir.path().join(format!("{id}.json")).exists());
}

#[tokio::test]
async fn odds_ratio_at_most_one_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let (status, v) = call(&app(dir.path()), "POST", "/v1/sessions", Some(create_body(0.9))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["code"], "domain");
    assert_eq!(v["field"], "theta");
}

#[tokio::test]
async fn threshold_outside_unit_interval_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = create_body(1.5);
    body["thresholds"] = json!([[1.2]]);
    let (status, _) = call(&app(dir.path()), "POST", "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn malformed_body_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, v) = call(&app, "POST", "/v1/sessions", Some(json!({"spec": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "schema");
    let mut body = create_body(1.5);
    body["spec"]["k"] = json!("three");
    let (status, _) = call(&app, "POST", "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, v) = call(&app, "GET", "/v1/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
    let (status, _) = call(&app, "POST", "/v1/sessions/nope/passes", Some(json!({}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn second_pass_before_first_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app).await;
    let body = json!({"pass_index": 2, "thresholds": [[0.1, 0.5]], "heuristic": "BN"});
    let (status, v) = call(&app, "POST", &format!("/v1/sessions/{id}/passes"), Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");
    let (_, snap) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(snap["status"], "idle");
    assert_eq!(snap["state"]["history"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn two_passes_with_initial_check() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app).await;
    let (status, p1) = call(&app, "POST", &format!("/v1/sessions/{id}/passes"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::OK, "{p1}");
    assert_eq!(p1["plan"]["pass_index"], 1);

    let body = json!({"thresholds": [[0.01, 0.95]], "heuristic": "BN"});
    let (status, p2) = call(&app, "POST", &format!("/v1/sessions/{id}/passes"), Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{p2}");
    assert_eq!(p2["heuristic"], "BN");
    // Thresholds far from every system's envelope are settled without new
    // sampling for at least one system.
    let entries = p2["matrix"]["entries"].as_array().unwrap();
    let initial = entries
        .iter()
        .flat_map(|sys| sys[0].as_array().unwrap().iter())
        .filter(|e| e["rule"].as_str().is_some_and(|r| r.starts_with("initial")))
        .count();
    assert!(initial > 0, "{p2}");

    let (status, fetched) = call(&app, "GET", &format!("/v1/sessions/{id}/passes/2"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, p2);
    let (status, _) = call(&app, "GET", &format!("/v1/sessions/{id}/passes/3"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn later_pass_without_heuristic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app).await;
    call(&app, "POST", &format!("/v1/sessions/{id}/passes"), Some(json!({}))).await;
    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/passes"), Some(json!({"thresholds": [[0.2]]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn restart_resumes_identically() {
    let dir = tempfile::tempdir().unwrap();
    let pass2 = json!({"thresholds": [[0.15, 0.45]], "heuristic": "B"});

    let first = app(dir.path());
    let id = create(&first).await;
    call(&first, "POST", &format!("/v1/sessions/{id}/passes"), Some(json!({}))).await;
    let (_, before) = call(&first, "GET", &format!("/v1/sessions/{id}"), None).await;
    drop(first);

    // A fresh service reading the same directory continues the session.
    let second = app(dir.path());
    let (_, reloaded) = call(&second, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(before["state"], reloaded["state"]);
    let (status, resumed) = call(&second, "POST", &format!("/v1/sessions/{id}/passes"), Some(pass2.clone())).await;
    assert_eq!(status, StatusCode::OK);

    // The same sequence without a restart gives the same pass.
    let other = tempfile::tempdir().unwrap();
    let straight = app(other.path());
    let (_, v) = call(&straight, "POST", "/v1/sessions", Some(create_body(1.5))).await;
    let id2 = v["id"].as_str().unwrap().to_string();
    call(&straight, "POST", &format!("/v1/sessions/{id2}/passes"), Some(json!({}))).await;
    let (_, direct) = call(&straight, "POST", &format!("/v1/sessions/{id2}/passes"), Some(pass2)).await;
    assert_eq!(resumed, direct);
}

#[tokio::test]
async fn list_includes_created_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app).await;
    let (status, v) = call(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v.as_array().unwrap().iter().any(|s| s["id"] == id.as_str()));
}

#[tokio::test]
async fn concurrent_pass_requests_conflict_or_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let state: Arc<AppState> = AppState::open(dir.path()).unwrap();
    let app = router(state);
    let id = create(&app).await;
    let uri = format!("/v1/sessions/{id}/passes");
    let (a, b) = tokio::join!(
        call(&app, "POST", &uri, Some(json!({}))),
        call(&app, "POST", &uri, Some(json!({})))
    );
    let statuses = [a.0, b.0];
    assert!(statuses.contains(&StatusCode::OK));
    // The loser either hit the running pass or asked for pass 1 again.
    for s in statuses {
        assert!(s == StatusCode::OK || s == StatusCode::CONFLICT || s == StatusCode::UNPROCESSABLE_ENTITY, "{s}");
    }
}
