use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use crowdlens_core::AnalyticsError;
use serde_json::json;

/// Client-facing error: a stable machine-readable `code` plus a message.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code, message: message.into() }
    }

    /// The only body ever sent with a 401.
    pub fn unauthorized() -> Self {
        ApiError { status: StatusCode::UNAUTHORIZED, code: "unauthorized", message: "missing or invalid API key".into() }
    }

    pub fn not_found() -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: "no such endpoint".into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"code": self.code, "message": self.message}}))).into_response()
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let code = match e {
            AnalyticsError::UnknownMetric(_) => "unknown_metric",
            AnalyticsError::InvalidRange { .. } => "invalid_range",
            AnalyticsError::InvalidStaleness(_) | AnalyticsError::InvalidCap(_) => "invalid_param",
            AnalyticsError::NoData => "no_data",
        };
        ApiError::bad_request(code, e.to_string())
    }
}
