use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pbvote_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("malformed ballot: {0}")]
    MalformedBallot(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::MalformedBallot(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Io(_) | ServiceError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not-found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::BadRequest(_) => "bad-request",
            ServiceError::MalformedBallot(_) => "malformed-ballot",
            ServiceError::Core(CoreError::InvalidBallot { violation, .. }) => violation.code(),
            ServiceError::Core(CoreError::Config(_)) => "invalid-config",
            ServiceError::Core(CoreError::TooManyPairs { .. }) => "too-many-pairs",
            ServiceError::Core(CoreError::WrongMode { .. }) => "wrong-mode",
            ServiceError::Core(_) => "invalid-request",
            ServiceError::Io(_) | ServiceError::Json(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}
