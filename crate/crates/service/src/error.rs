use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use sisco_core::engine::EngineError;
use sisco_core::kb::{KbError, UnknownSection};
use sisco_core::text::SearchError;

/// Error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorFields<'a>,
}

#[derive(Serialize)]
struct ErrorFields<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "SessionNotFound", format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorFields {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let code = match e {
            SearchError::EmptyQuery => "EmptyQuery",
            SearchError::ZeroLimit => "ZeroLimit",
        };
        Self::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

impl From<KbError> for ApiError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::NotFound { .. } => Self::new(StatusCode::NOT_FOUND, "NotFound", e.to_string()),
        }
    }
}

impl From<UnknownSection> for ApiError {
    fn from(e: UnknownSection) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSection", e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match &e {
            EngineError::EmptyConditionList => (StatusCode::BAD_REQUEST, "EmptyConditionList"),
            EngineError::UnknownCode { .. } => (StatusCode::BAD_REQUEST, "UnknownCode"),
            EngineError::UnclassifiedProcedure { .. } => (StatusCode::BAD_REQUEST, "UnclassifiedProcedure"),
            EngineError::StaleNode { .. } => (StatusCode::CONFLICT, "StaleNode"),
            EngineError::InvalidAnswer(_) => (StatusCode::BAD_REQUEST, "InvalidAnswer"),
            EngineError::SessionFinished(_) => (StatusCode::GONE, "SessionFinished"),
            EngineError::TreeDefect(_) => (StatusCode::INTERNAL_SERVER_ERROR, "TreeDefect"),
        };
        Self::new(status, code, e.to_string())
    }
}
