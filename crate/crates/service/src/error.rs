use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use advtext_core::Error;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    /// Stale candidate ids, undo on an empty stack, exhausted budget.
    Conflict(String),
    Core(Error),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Core(e) => match e {
                Error::InvalidArgument(_) | Error::UnknownClass(_) => StatusCode::BAD_REQUEST,
                Error::Unsupported(_) | Error::MissingHtps(_) => StatusCode::UNPROCESSABLE_ENTITY,
                Error::StaleAnchor(_) => StatusCode::CONFLICT,
                Error::Oracle { .. } | Error::ProbeFailed { .. } => StatusCode::BAD_GATEWAY,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not-found",
            ApiError::BadRequest(_) => "bad-request",
            ApiError::Conflict(_) => "conflict",
            ApiError::Core(Error::Unsupported(_)) => "unsupported",
            ApiError::Core(Error::MissingHtps(_)) => "missing-htps",
            ApiError::Core(Error::UnknownClass(_)) => "unknown-class",
            ApiError::Core(Error::Oracle { .. } | Error::ProbeFailed { .. }) => "oracle",
            ApiError::Core(_) => "internal",
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::NotFound(m) | ApiError::BadRequest(m) | ApiError::Conflict(m) => f.write_str(m),
            ApiError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string(), "kind": self.kind() });
        (self.status(), Json(body)).into_response()
    }
}
