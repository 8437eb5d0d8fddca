//! Drive the /v1 session API in-process: create, run two passes, read back.
//!
//! cargo run -p feaslab-service --example http_session

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &axum::Router, method: &str, uri: &str, body: Value) -> anyhow::Result<(u16, Value)> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("feaslab-http-example");
    let app = feaslab_service::router(feaslab_service::AppState::open(&dir)?);

    let create = json!({
        "spec": {"k": 3, "s": 1, "alpha": 0.05, "theta": 1.5, "expect_more_passes": true},
        "source": {"kind": "synthetic", "p": [[0.05], [0.3], [0.6]]},
        "thresholds": [[0.3]],
        "seed": 5
    });
    let (status, snap) = send(&app, "POST", "/v1/sessions", create).await?;
    let id = snap["id"].as_str().unwrap_or_default().to_string();
    println!("POST /v1/sessions -> {status}, id {id}");

    let (status, p1) = send(&app, "POST", &format!("/v1/sessions/{id}/passes"), json!({})).await?;
    println!("pass 1 -> {status}, {} replications", p1["obs"]["total"]);

    let next = json!({"thresholds": [[0.1, 0.5]], "heuristic": "BN"});
    let (status, p2) = send(&app, "POST", &format!("/v1/sessions/{id}/passes"), next).await?;
    println!("pass 2 -> {status}, {} replications", p2["obs"]["total"]);

    let (_, snap) = send(&app, "GET", &format!("/v1/sessions/{id}"), Value::Null).await?;
    println!("constraints: {}", snap["derived"]["constraints"]);
    println!("OBS per pass: {}", snap["derived"]["obs"]["per_pass"]);

    let (status, err) = send(&app, "POST", "/v1/sessions", json!({
        "spec": {"k": 1, "s": 1, "alpha": 0.05, "theta": 0.9},
        "source": {"kind": "synthetic", "p": [[0.2]]},
        "thresholds": [[0.3]]
    }))
    .await?;
    println!("theta 0.9 -> {status} {err}");
    Ok(())
}
