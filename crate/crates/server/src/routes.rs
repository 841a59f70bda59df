use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use scribble_core::segment::SegmenterKind;

use crate::error::{ApiError, ApiResult};
use crate::session::{Prediction, Session, Stroke, StrokeLog};
use crate::state::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/spec", get(spec))
        .route("/api/samples", get(list_samples))
        .route("/api/samples/{id}/image", get(sample_image))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", delete(delete_session).get(session_info))
        .route("/api/sessions/{id}/strokes", post(add_stroke))
        .route("/api/sessions/{id}/predict", post(predict))
        .route("/api/sessions/{id}/undo", post(undo))
        .route("/api/sessions/{id}/reset", post(reset))
        .route("/api/sessions/{id}/log", get(stroke_log))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Serialize)]
struct SampleInfo<'a> {
    id: &'a str,
    width: usize,
    height: usize,
    classes: Vec<&'a str>,
}

async fn list_samples(State(st): State<AppState>) -> Json<Value> {
    let samples: Vec<SampleInfo> = st
        .catalog()
        .samples()
        .iter()
        .map(|s| SampleInfo {
            id: &s.id,
            width: s.image.width(),
            height: s.image.height(),
            classes: s.targets.iter().map(|t| t.class.as_str()).collect(),
        })
        .collect();
    Json(json!({ "name": st.catalog().name, "samples": samples }))
}

async fn sample_image(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let (_, image) = st.catalog().get(&id)?;
    let png = image.to_png_bytes()?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

#[derive(Deserialize)]
struct CreateSession {
    sample_id: String,
    backend: Option<SegmenterKind>,
    target_class: Option<String>,
}

async fn create_session(State(st): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    let (sample, image) = st.catalog().get(&req.sample_id)?;
    let target = match &req.target_class {
        Some(c) => Some(
            sample
                .targets
                .iter()
                .find(|t| &t.class == c)
                .ok_or_else(|| ApiError::NotFound(format!("target class {c:?} in sample {:?}", sample.id)))?,
        ),
        None => sample.targets.first(),
    };
    let backend = st.backend(req.backend.unwrap_or(st.default_backend()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(
        id,
        sample.id.clone(),
        target.map(|t| t.class.clone()),
        backend,
        image,
        target.map(|t| t.mask.clone()),
    )?;
    let (w, h) = (sample.image.width(), sample.image.height());
    let class = session.target_class.clone();
    let kind = session.backend();
    let id = st.insert(session);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "backend": kind, "target_class": class, "width": w, "height": h })),
    ))
}

/// Exclusive access to a session, or 409 if another request holds it.
async fn lock(st: &AppState, id: &str) -> ApiResult<tokio::sync::OwnedMutexGuard<Session>> {
    st.get(id)?
        .try_lock_owned()
        .map_err(|_| ApiError::Conflict(id.to_string()))
}

async fn session_info(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = lock(&st, &id).await?;
    Ok(Json(json!({
        "session_id": s.id,
        "sample_id": s.sample_id,
        "backend": s.backend(),
        "target_class": s.target_class,
        "round": s.round(),
        "pending_strokes": s.pending().len(),
        "age_seconds": s.created.elapsed().as_secs_f64(),
    })))
}

async fn add_stroke(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(stroke): Json<Stroke>,
) -> ApiResult<StatusCode> {
    let mut s = lock(&st, &id).await?;
    s.add_stroke(stroke)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn predict(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Prediction>> {
    let mut s = lock(&st, &id).await?;
    let p = tokio::task::spawn_blocking(move || s.predict())
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(p))
}

async fn undo(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let mut s = lock(&st, &id).await?;
    let removed = s.undo();
    Ok(Json(json!({ "removed": removed, "round": s.round() })))
}

async fn reset(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let mut s = lock(&st, &id).await?;
    s.reset()?;
    Ok(Json(json!({ "round": s.round() })))
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    st.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn stroke_log(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StrokeLog>> {
    let s = lock(&st, &id).await?;
    Ok(Json(s.log()))
}

async fn spec() -> Json<Value> {
    Json(api_description())
}

/// Machine-readable summary of the endpoints.
pub fn api_description() -> Value {
    let ep = |method: &str, path: &str, body: Value, response: Value| {
        json!({ "method": method, "path": path, "body": body, "response": response })
    };
    json!({
        "title": "scribble refinement service",
        "version": env!("CARGO_PKG_VERSION"),
        "mask_format": "row-major run lengths starting with a background run: {w, h, runs}",
        "errors": { "404": "unknown sample or session", "409": "session busy", "422": "malformed request or stroke" },
        "endpoints": [
            ep("GET", "/api/samples", Value::Null, json!({"name": "string", "samples": [{"id": "string", "width": "int", "height": "int", "classes": ["string"]}]})),
            ep("GET", "/api/samples/{id}/image", Value::Null, json!("image/png")),
            ep("POST", "/api/sessions", json!({"sample_id": "string", "backend": "toynet|geodesic|oracle (optional)", "target_class": "string (optional)"}), json!({"session_id": "string"})),
            ep("GET", "/api/sessions/{id}", Value::Null, json!({"round": "int", "pending_strokes": "int"})),
            ep("POST", "/api/sessions/{id}/strokes", json!({"channel": "pos|neg", "polyline": [["x", "y"]], "width": "number >= 1"}), json!("204")),
            ep("POST", "/api/sessions/{id}/predict", Value::Null, json!({"round": "int", "mask": "rle", "iou": "number (optional)", "dice": "number (optional)"})),
            ep("POST", "/api/sessions/{id}/undo", Value::Null, json!({"removed": "int"})),
            ep("POST", "/api/sessions/{id}/reset", Value::Null, json!({"round": 0})),
            ep("GET", "/api/sessions/{id}/log", Value::Null, json!({"rounds": [{"round": "int", "strokes": ["stroke"], "mask": "rle"}]})),
            ep("DELETE", "/api/sessions/{id}", Value::Null, json!("204")),
            ep("GET", "/api/spec", Value::Null, json!("this document")),
        ],
    })
}
