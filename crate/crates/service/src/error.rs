use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hyperstroke_seq::SeqError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown or consumed suggestion {0}")]
    UnknownSuggestion(String),
    #[error("session limit of {0} reached")]
    Capacity(usize),
    #[error("no model loaded")]
    NoModel,
    #[error("invalid image: {0}")]
    BadImage(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("invalid prompt: {0}")]
    Prompt(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("startup: {0}")]
    Startup(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownSuggestion(_) => StatusCode::NOT_FOUND,
            ServiceError::Capacity(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::NoModel => StatusCode::CONFLICT,
            ServiceError::BadImage(_) | ServiceError::BadRequest(_) | ServiceError::Prompt(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::Internal(_) | ServiceError::Startup(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Sampling errors caused by the request map to 422, the rest to 500.
impl From<SeqError> for ServiceError {
    fn from(e: SeqError) -> Self {
        match e {
            SeqError::Prompt(_) | SeqError::Capacity { .. } | SeqError::Core(_) => ServiceError::Prompt(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
