use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use biae_core::Error as CoreError;
use biae_core::wire::{ErrorBody, ErrorDetail};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{message}")]
    Body { status: StatusCode, message: String },

    #[error("request handler failed: {0}")]
    Task(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Core(e) => match e {
                CoreError::Validation(_) | CoreError::Schema { .. } => StatusCode::BAD_REQUEST,
                CoreError::SessionNotFound(_) => StatusCode::NOT_FOUND,
                CoreError::SessionConflict(_) => StatusCode::CONFLICT,
                CoreError::Unavailable(_) | CoreError::Generation(_) => StatusCode::SERVICE_UNAVAILABLE,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ApiError::Body { status, .. } => *status,
            ApiError::Task(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::Core(e) => match e {
                CoreError::Validation(_) | CoreError::Schema { .. } => "invalid_input",
                CoreError::SessionNotFound(_) => "not_found",
                CoreError::SessionConflict(_) => "conflict",
                CoreError::Unavailable(_) => "model_unavailable",
                CoreError::Generation(_) => "generation_failed",
                _ => "internal",
            },
            ApiError::Body { .. } => "bad_body",
            ApiError::Task(_) => "internal",
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::Body {
            status: rejection.status(),
            message: rejection.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::warn!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: ErrorDetail {
                kind: self.kind().into(),
                message: self.to_string(),
            },
        };
        (status, Json(body)).into_response()
    }
}
