//! HTTP routes. Handlers parse the request, hand the work to
//! [`SessionManager`] on the blocking pool and serialize the result.

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use dysfluency_core::RuleConfig;
use serde::Deserialize;

use crate::error::{Result, ServiceError};
use crate::model::{parse_patch, FeedbackRequest};
use crate::session::SessionManager;

/// Header naming the clinician behind a mutation.
pub const AUTHOR_HEADER: &str = "x-author";
/// Optional JSON config (full or partial) for a new session, e.g. the
/// fragment printed by `dysfluency calibrate`.
pub const CONFIG_HEADER: &str = "x-rule-config";

const ANONYMOUS: &str = "anonymous";

type AppState = Arc<SessionManager>;

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/detect", post(detect))
        .route("/sessions/{id}/thresholds", patch(patch_thresholds))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/waveform", get(waveform))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/audit", get(audit))
        // uploads are capped by the manager so the error body stays JSON
        .layer(DefaultBodyLimit::disable())
        .with_state(manager)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Detection(format!("worker panicked: {e}")))?
}

fn author(headers: &HeaderMap) -> String {
    headers
        .get(AUTHOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .unwrap_or(ANONYMOUS)
        .to_string()
}

async fn read_capped(body: Body, limit: usize) -> Result<Bytes> {
    axum::body::to_bytes(body, limit.saturating_add(1))
        .await
        .map_err(|_| ServiceError::PayloadTooLarge {
            size: limit.saturating_add(1),
            limit,
        })
}

async fn create_session(
    State(m): State<AppState>,
    headers: HeaderMap,
    body: Body,
) -> Result<impl IntoResponse> {
    let initial = match headers.get(CONFIG_HEADER) {
        Some(v) => {
            let text = v
                .to_str()
                .map_err(|_| ServiceError::BadRequest(format!("{CONFIG_HEADER} is not UTF-8")))?;
            Some(RuleConfig::from_json(text)?)
        }
        None => None,
    };
    let bytes = read_capped(body, m.max_upload_bytes()).await?;
    let view = blocking(move || m.create(&bytes, initial)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(m): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse> {
    Ok(Json(m.get(&id)?))
}

async fn detect(State(m): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(move || m.detect(&id)).await?))
}

async fn patch_thresholds(
    State(m): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse> {
    let patch = parse_patch(&body)?;
    let who = author(&headers);
    Ok(Json(
        blocking(move || m.patch_thresholds(&id, &patch, &who)).await?,
    ))
}

async fn events(State(m): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(m.events(&id)?))
}

#[derive(Deserialize)]
struct WaveformQuery {
    points: Option<String>,
}

async fn waveform(
    State(m): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<WaveformQuery>,
) -> Result<impl IntoResponse> {
    let raw = q
        .points
        .ok_or_else(|| ServiceError::BadRequest("missing `points` query parameter".into()))?;
    let points = raw.parse::<usize>().map_err(|_| {
        ServiceError::BadRequest(format!("points must be an integer >= 2, got `{raw}`"))
    })?;
    Ok(Json(m.waveform(&id, points)?))
}

async fn feedback(
    State(m): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse> {
    let req: FeedbackRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::BadRequest(format!("malformed feedback: {e}")))?;
    let who = author(&headers);
    let ack = blocking(move || m.record_feedback(&id, &req, &who)).await?;
    Ok((StatusCode::CREATED, Json(ack)))
}

async fn audit(State(m): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(m.audit(&id)?))
}
