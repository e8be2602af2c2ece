#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use trackfill_cli::service::{router, AppState};
use trackfill_cli::store::Store;
use trackfill_core::model::SequencePredictor;

pub const BOUNDARY: &str = "trackfill-test-boundary";

pub fn app(predictor: Option<Arc<dyn SequencePredictor>>) -> Router {
    let mut state = AppState::new(Store::in_memory());
    if let Some(p) = predictor {
        state = state.with_predictor(p);
    }
    router(Arc::new(state))
}

pub fn multipart(name: &str, bytes: &[u8]) -> Vec<u8> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\n\
         Content-Type: audio/midi\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub struct Reply {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }
}

pub async fn send(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, bytes }
}

pub async fn upload(app: &Router, name: &str, midi: &[u8]) -> Reply {
    let req = Request::post("/pieces")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(name, midi)))
        .unwrap();
    send(app, req).await
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn generate(app: &Router, id: &str, request: &Value) -> Reply {
    let req = Request::post(format!("/pieces/{id}/generate"))
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(request).unwrap()))
        .unwrap();
    send(app, req).await
}

/// Checks `(schema name, instance)` pairs with the Python `jsonschema`
/// package. Returns the validator's report, or `Err` when Python or the
/// package is unavailable.
pub fn validate_with_python(cases: &[(&str, Value)]) -> Result<(bool, String), String> {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases_path = dir.path().join("cases.json");
    let list: Vec<Value> =
        cases.iter().map(|(s, v)| serde_json::json!({"schema": s, "instance": v})).collect();
    std::fs::write(&cases_path, serde_json::to_vec(&list).unwrap()).map_err(|e| e.to_string())?;
    let out = std::process::Command::new("python3")
        .arg(manifest.join("tests/validate_schema.py"))
        .arg(manifest.join("schemas"))
        .arg(&cases_path)
        .output()
        .map_err(|e| format!("python3 unavailable: {e}"))?;
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    if text.contains("ModuleNotFoundError") {
        return Err(text);
    }
    Ok((out.status.success(), text))
}
