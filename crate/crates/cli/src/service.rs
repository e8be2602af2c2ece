//! HTTP API over the piece store and the generator.
//!
//! | route | |
//! |---|---|
//! | `GET /health` | `{status, model, vocab_hash, density_table}` |
//! | `POST /pieces` | multipart MIDI upload → `{id, pianoroll}` |
//! | `GET /pieces/{id}` | stored record |
//! | `GET /pieces/{id}/midi` | SMF export (120 BPM, velocity 96) |
//! | `POST /pieces/{id}/generate` | generation request → `{id, parent, seed, pianoroll}` |
//! | `GET /schemas/{name}` | JSON schemas of the bodies above |
//!
//! Errors are `{"error": message}` with status 400 (bad input), 404 (unknown
//! id), 409 (no model loaded), 422 (well-formed but unusable input) or 504
//! (token budget exhausted).

use std::sync::Arc;

use axum::extract::multipart::MultipartRejection;
use axum::extract::{Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use trackfill_core::generate::{generate, GenerateError, GenerationRequest};
use trackfill_core::midi::{piece_from_midi, piece_to_midi};
use trackfill_core::model::{ModelError, SequencePredictor};
use trackfill_core::vocab::vocab_hash;
use trackfill_core::DensityTable;

use crate::pianoroll::PianoRoll;
use crate::store::{PieceRecord, Store};

/// Largest seed handed out when the client sends none; exactly representable
/// as a JSON number in every client.
pub const MAX_SERVER_SEED: u64 = (1 << 53) - 1;

pub const SCHEMAS: &[(&str, &str)] = &[
    ("pianoroll", include_str!("../schemas/pianoroll.json")),
    ("piece_response", include_str!("../schemas/piece_response.json")),
    ("record", include_str!("../schemas/record.json")),
    ("generation_request", include_str!("../schemas/generation_request.json")),
    ("generation_response", include_str!("../schemas/generation_response.json")),
    ("health", include_str!("../schemas/health.json")),
    ("error", include_str!("../schemas/error.json")),
];

pub struct AppState {
    pub store: Store,
    pub predictor: Option<Arc<dyn SequencePredictor>>,
    /// `None` means the all-zero fallback table is in use.
    pub density: Option<DensityTable>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState { store, predictor: None, density: None }
    }

    pub fn with_predictor(mut self, predictor: Arc<dyn SequencePredictor>) -> Self {
        self.predictor = Some(predictor);
        self
    }

    pub fn with_density(mut self, table: DensityTable) -> Self {
        self.density = Some(table);
        self
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("no piece with id `{id}`"))
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<GenerateError> for ApiError {
    fn from(e: GenerateError) -> Self {
        let status = match &e {
            GenerateError::InvalidRequest(_) | GenerateError::InvalidSelection(_) | GenerateError::Codec(_) => {
                StatusCode::BAD_REQUEST
            }
            GenerateError::StepBudgetExceeded(_) => StatusCode::GATEWAY_TIMEOUT,
            GenerateError::Model(ModelError::ContextTooLong { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            GenerateError::Piece(_) | GenerateError::AllMasked | GenerateError::Model(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/pieces", post(upload))
        .route("/pieces/{id}", get(get_piece))
        .route("/pieces/{id}/midi", get(get_midi))
        .route("/pieces/{id}/generate", post(generate_piece))
        .route("/schemas/{name}", get(get_schema))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let model = state.predictor.as_ref().map(|p| p.name());
    Json(json!({
        "status": if model.is_some() { "ok" } else { "degraded" },
        "model": model,
        "vocab_hash": vocab_hash(),
        "density_table": state.density.is_some(),
    }))
}

fn piece_response(rec: &PieceRecord) -> Json<Value> {
    Json(json!({ "id": rec.id, "pianoroll": rec.pianoroll }))
}

async fn upload(
    State(state): State<Arc<AppState>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Json<Value>> {
    let mut multipart = multipart.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let field = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "expected a MIDI file part"))?;
    let source = field.file_name().map(str::to_owned);
    let bytes = field.bytes().await.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    if bytes.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty MIDI file"));
    }
    let state2 = state.clone();
    let rec = tokio::task::spawn_blocking(move || -> ApiResult<Arc<PieceRecord>> {
        let piece = piece_from_midi(&bytes).map_err(|e| {
            let status = if e.is_unrepresentable() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
            ApiError::new(status, e.to_string())
        })?;
        let levels = state2.density.clone().unwrap_or_default().levels(&piece);
        let roll = PianoRoll::from_piece(&piece, &levels).map_err(ApiError::internal)?;
        state2.store.insert(roll, source, None).map_err(ApiError::internal)
    })
    .await
    .map_err(ApiError::internal)??;
    tracing::info!(id = %rec.id, "stored upload");
    Ok(piece_response(&rec))
}

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<PieceRecord>> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn get_piece(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let rec = lookup(&state, &id)?;
    Ok(Json(serde_json::to_value(&*rec).map_err(ApiError::internal)?))
}

async fn get_midi(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let rec = lookup(&state, &id)?;
    let (piece, _) = rec.pianoroll.to_piece().map_err(ApiError::internal)?;
    let disposition = format!("attachment; filename=\"{id}.mid\"");
    Ok(([(header::CONTENT_TYPE, "audio/midi".to_string()), (header::CONTENT_DISPOSITION, disposition)], piece_to_midi(&piece))
        .into_response())
}

/// Parses a generation request, filling in a fresh seed when the client sent none.
pub fn parse_request(body: &[u8]) -> ApiResult<(GenerationRequest, u64)> {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, m);
    let mut value: Value = serde_json::from_slice(body).map_err(|e| bad(format!("invalid JSON: {e}")))?;
    let obj = value.as_object_mut().ok_or_else(|| bad("request must be a JSON object".into()))?;
    let sampler = obj.entry("sampler").or_insert_with(|| json!({}));
    let sampler = sampler.as_object_mut().ok_or_else(|| bad("`sampler` must be an object".into()))?;
    if sampler.get("seed").is_none_or(Value::is_null) {
        sampler.insert("seed".into(), json!(rand::random_range(0..=MAX_SERVER_SEED)));
    }
    let request: GenerationRequest = serde_json::from_value(value).map_err(|e| bad(format!("invalid request: {e}")))?;
    request.sampler.check()?;
    let seed = request.sampler.seed;
    Ok((request, seed))
}

async fn generate_piece(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Json<Value>> {
    let rec = lookup(&state, &id)?;
    let (request, seed) = parse_request(&body)?;
    let predictor = state
        .predictor
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no model is loaded"))?;
    let state2 = state.clone();
    let out = tokio::task::spawn_blocking(move || -> ApiResult<Arc<PieceRecord>> {
        let (base, levels) = rec.pianoroll.to_piece().map_err(ApiError::internal)?;
        let g = generate(predictor.as_ref(), &base, &levels, &request)?;
        let roll = PianoRoll::from_piece(&g.piece, &g.densities).map_err(ApiError::internal)?;
        state2.store.insert(roll, None, Some(rec.id.clone())).map_err(ApiError::internal)
    })
    .await
    .map_err(ApiError::internal)??;
    tracing::info!(parent = %id, id = %out.id, seed, "generated");
    Ok(Json(json!({ "id": out.id, "parent": id, "seed": seed, "pianoroll": out.pianoroll })))
}

async fn get_schema(Path(name): Path<String>) -> ApiResult<Response> {
    let name = name.strip_suffix(".json").unwrap_or(&name);
    let (_, text) = SCHEMAS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no schema `{name}`")))?;
    Ok(([(header::CONTENT_TYPE, "application/schema+json")], *text).into_response())
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
