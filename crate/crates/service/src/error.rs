use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    NotFound(String),

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("payload of {size} bytes exceeds the {limit}-byte limit")]
    PayloadTooLarge { size: usize, limit: usize },

    #[error("{0}")]
    InvalidConfig(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("{0}")]
    Conflict(String),

    #[error("storage error: {0}")]
    Storage(String),

    #[error("detection failed: {0}")]
    Detection(String),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidAudio(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::PayloadTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::InvalidConfig(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Storage(_) | ServiceError::Detection(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    /// Stable machine-readable tag for the JSON error body.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::InvalidAudio(_) => "invalid_audio",
            ServiceError::PayloadTooLarge { .. } => "payload_too_large",
            ServiceError::InvalidConfig(_) => "invalid_config",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Storage(_) => "storage",
            ServiceError::Detection(_) => "detection",
        }
    }

    pub(crate) fn storage(what: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        ServiceError::Storage(format!("{what}: {e}"))
    }
}

impl From<dysfluency_core::Error> for ServiceError {
    fn from(e: dysfluency_core::Error) -> Self {
        use dysfluency_core::Error as E;
        match e {
            E::InvalidConfig(m) => ServiceError::InvalidConfig(m),
            E::UnsupportedFormat { .. } | E::EmptyAudio { .. } | E::CorruptHeader { .. } => {
                ServiceError::InvalidAudio(e.to_string())
            }
            other => ServiceError::Detection(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}
