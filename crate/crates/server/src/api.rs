//! Response envelope and the closed set of error codes.

use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use reta_core::permission::DenyReason;
use reta_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

/// Every error code the service can return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    BadRequest,
    ParseError,
    ValidationFailed,
    HeaderMismatch,
    ImportRejected,
    BadFilter,
    BadAggregation,
    UnreadableSpreadsheet,
    AuthFailure,
    Unauthenticated,
    CrossTenant,
    MissingPermission,
    UnknownTarget,
    UnknownTenant,
    UnknownSchema,
    UnknownRecord,
    NotFound,
    MethodNotAllowed,
    DuplicateTenant,
    UniqueViolation,
    PayloadTooLarge,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 22] = [
        Self::BadRequest,
        Self::ParseError,
        Self::ValidationFailed,
        Self::HeaderMismatch,
        Self::ImportRejected,
        Self::BadFilter,
        Self::BadAggregation,
        Self::UnreadableSpreadsheet,
        Self::AuthFailure,
        Self::Unauthenticated,
        Self::CrossTenant,
        Self::MissingPermission,
        Self::UnknownTarget,
        Self::UnknownTenant,
        Self::UnknownSchema,
        Self::UnknownRecord,
        Self::NotFound,
        Self::MethodNotAllowed,
        Self::DuplicateTenant,
        Self::UniqueViolation,
        Self::PayloadTooLarge,
        Self::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BadRequest => "bad-request",
            Self::ParseError => "parse-error",
            Self::ValidationFailed => "validation-failed",
            Self::HeaderMismatch => "header-mismatch",
            Self::ImportRejected => "import-rejected",
            Self::BadFilter => "bad-filter",
            Self::BadAggregation => "bad-aggregation",
            Self::UnreadableSpreadsheet => "unreadable-spreadsheet",
            Self::AuthFailure => "auth-failure",
            Self::Unauthenticated => "unauthenticated",
            Self::CrossTenant => "cross-tenant",
            Self::MissingPermission => "missing-permission",
            Self::UnknownTarget => "unknown-target",
            Self::UnknownTenant => "unknown-tenant",
            Self::UnknownSchema => "unknown-schema",
            Self::UnknownRecord => "unknown-record",
            Self::NotFound => "not-found",
            Self::MethodNotAllowed => "method-not-allowed",
            Self::DuplicateTenant => "duplicate-tenant",
            Self::UniqueViolation => "unique-violation",
            Self::PayloadTooLarge => "payload-too-large",
            Self::Internal => "internal",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            Self::BadRequest
            | Self::ParseError
            | Self::ValidationFailed
            | Self::HeaderMismatch
            | Self::ImportRejected
            | Self::BadFilter
            | Self::BadAggregation
            | Self::UnreadableSpreadsheet => StatusCode::BAD_REQUEST,
            Self::AuthFailure | Self::Unauthenticated => StatusCode::UNAUTHORIZED,
            Self::CrossTenant | Self::MissingPermission => StatusCode::FORBIDDEN,
            Self::UnknownTarget | Self::UnknownTenant | Self::UnknownSchema | Self::UnknownRecord | Self::NotFound => {
                StatusCode::NOT_FOUND
            }
            Self::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            Self::DuplicateTenant | Self::UniqueViolation => StatusCode::CONFLICT,
            Self::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            Self::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Code used when a response without an envelope is converted to one.
    pub fn for_status(status: StatusCode) -> ErrorCode {
        match status {
            StatusCode::UNAUTHORIZED => Self::Unauthenticated,
            StatusCode::FORBIDDEN => Self::MissingPermission,
            StatusCode::NOT_FOUND => Self::NotFound,
            StatusCode::METHOD_NOT_ALLOWED => Self::MethodNotAllowed,
            StatusCode::CONFLICT => Self::UniqueViolation,
            StatusCode::PAYLOAD_TOO_LARGE => Self::PayloadTooLarge,
            s if s.is_server_error() => Self::Internal,
            _ => Self::BadRequest,
        }
    }
}

impl From<DenyReason> for ErrorCode {
    fn from(reason: DenyReason) -> Self {
        match reason {
            DenyReason::CrossTenant => Self::CrossTenant,
            DenyReason::MissingPermission => Self::MissingPermission,
            DenyReason::Unauthenticated => Self::Unauthenticated,
            DenyReason::UnknownTarget => Self::UnknownTarget,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub details: Vec<Json>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn denied(reason: DenyReason) -> Self {
        Self::new(reason.into(), format!("access denied: {reason}"))
    }

    pub fn auth_failure() -> Self {
        Self::new(ErrorCode::AuthFailure, "authentication failed")
    }

    fn with_details<T: Serialize>(mut self, items: impl IntoIterator<Item = T>) -> Self {
        self.details = items
            .into_iter()
            .map(|d| serde_json::to_value(d).unwrap_or(Json::Null))
            .collect();
        self
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        match err {
            Error::Parse(errors) => ApiError::new(ErrorCode::ParseError, message).with_details(errors.0),
            Error::Invalid(report) => {
                ApiError::new(ErrorCode::ValidationFailed, message).with_details(report.iter().cloned())
            }
            Error::Validation(issues) => ApiError::new(ErrorCode::ValidationFailed, message).with_details(issues),
            Error::DuplicateTenant(_) => ApiError::new(ErrorCode::DuplicateTenant, message),
            // no detail on which part of the credentials was wrong
            Error::AuthFailure => ApiError::auth_failure(),
            Error::UnknownTenant(_) => ApiError::new(ErrorCode::UnknownTenant, message),
            Error::UnknownUser(_) => ApiError::new(ErrorCode::UnknownTarget, message),
            Error::UnknownSchema(_) => ApiError::new(ErrorCode::UnknownSchema, message),
            Error::UnknownRecord { .. } => ApiError::new(ErrorCode::UnknownRecord, message),
            Error::UniqueViolation { ref field, ref value } => {
                let detail = json!({ "field": field, "value": value });
                ApiError::new(ErrorCode::UniqueViolation, message).with_details([detail])
            }
            Error::HeaderMismatch { ref expected, ref found } => {
                let detail = json!({ "expected": expected, "found": found });
                ApiError::new(ErrorCode::HeaderMismatch, message).with_details([detail])
            }
            Error::ImportRejected(issues) => {
                ApiError::new(ErrorCode::ImportRejected, "import rejected").with_details(issues)
            }
            Error::SchemaMismatch(_) => ApiError::new(ErrorCode::ValidationFailed, message),
            Error::BadFilter(_) => ApiError::new(ErrorCode::BadFilter, message),
            Error::BadAggregation(_) => ApiError::new(ErrorCode::BadAggregation, message),
            Error::Tabular(_) => ApiError::new(ErrorCode::UnreadableSpreadsheet, message),
            Error::Corrupt(_) | Error::Io(_) => {
                tracing::error!("{message}");
                ApiError::new(ErrorCode::Internal, "internal error")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "ok": false,
            "error": {
                "code": self.code.as_str(),
                "message": self.message,
                "details": self.details,
            }
        });
        json_response(self.code.status(), &body)
    }
}

pub type ApiResult<T = Response> = Result<T, ApiError>;

/// A successful envelope.
pub fn ok<T: Serialize>(data: T) -> Response {
    ok_with(StatusCode::OK, data)
}

pub fn ok_with<T: Serialize>(status: StatusCode, data: T) -> Response {
    match serde_json::to_value(data) {
        Ok(data) => json_response(status, &json!({ "ok": true, "data": data })),
        Err(e) => ApiError::new(ErrorCode::Internal, e.to_string()).into_response(),
    }
}

fn json_response(status: StatusCode, body: &Json) -> Response {
    let mut response = (status, body.to_string()).into_response();
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    response
}
