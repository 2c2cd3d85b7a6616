mod auth;
mod data;
mod meta;
mod systems;

use std::collections::HashMap;

use axum::body::{to_bytes, Bytes};
use axum::extract::{FromRequest, Multipart, Request};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::map_response;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use reta_core::permission::{authorize, Action, Decision, DenyReason, Principal};
use reta_core::Store;
use tower_http::services::ServeDir;

use crate::api::{ApiError, ApiResult, ErrorCode};
use crate::{AppState, ServerConfig};

pub(crate) type Params = HashMap<String, String>;

pub(crate) fn router(state: AppState, config: &ServerConfig) -> Router {
    let api = Router::new()
        .route("/api/health", get(systems::health))
        .route("/api/auth/tenant", post(auth::tenant_login))
        .route("/api/auth/user", post(auth::user_login))
        .route("/api/auth/logout", post(auth::logout))
        .route("/api/auth/whoami", get(auth::whoami))
        .route("/api/systems", get(systems::list).post(systems::upload))
        .route("/api/systems/{tenant}", get(systems::show).delete(systems::delete))
        .route("/api/meta", get(meta::overview))
        .route("/api/meta/{kind}", get(meta::list))
        .route("/api/meta/{kind}/{id}", get(meta::show).put(meta::put).delete(meta::delete))
        .route("/api/data", get(data::schemas))
        .route("/api/data/{schemaid}", get(data::list).post(data::create))
        .route("/api/data/{schemaid}/import", post(data::import))
        .route("/api/data/{schemaid}/export", get(data::export))
        .route("/api/data/{schemaid}/stats", get(data::stats))
        .route("/api/data/{schemaid}/permissions", get(data::permissions))
        .route(
            "/api/data/{schemaid}/{id}",
            get(data::show).put(data::update).delete(data::delete),
        )
        .with_state(state);
    let mut router = api;
    if let Some(dir) = &config.ui_dir {
        router = router.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    router
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such route") })
        .layer(axum::extract::DefaultBodyLimit::max(config.max_upload_bytes))
        .layer(map_response(envelope_errors))
}

/// Wraps error responses produced outside the handlers (extractor
/// rejections, static files, method mismatches) in an envelope.
async fn envelope_errors(response: Response) -> Response {
    let status = response.status();
    if !(status.is_client_error() || status.is_server_error()) {
        return response;
    }
    let is_json = response
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if is_json {
        return response;
    }
    let body = to_bytes(response.into_body(), 64 * 1024).await.unwrap_or_default();
    let text = String::from_utf8_lossy(&body).trim().to_string();
    let code = ErrorCode::for_status(status);
    let message = if text.is_empty() {
        status.canonical_reason().unwrap_or("error").to_lowercase()
    } else {
        text
    };
    let mut response = ApiError::new(code, message).into_response();
    *response.status_mut() = status;
    response
}

/// Runs blocking store work off the async executor.
pub(crate) async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

pub(crate) fn principal(state: &AppState, headers: &HeaderMap) -> Option<Principal> {
    state.sessions.from_headers(headers)
}

/// Resolves the tenant a request acts on and checks `action` there.
///
/// Requests are confined to the caller's own tenant. Naming any other tenant
/// is refused before that tenant is looked at, so the answer does not depend
/// on whether it exists.
pub(crate) fn authorize_in_tenant(
    store: &Store,
    principal: Option<&Principal>,
    requested: Option<&str>,
    action: Action,
    schemaid: Option<&str>,
) -> ApiResult<String> {
    let principal = principal.ok_or_else(|| ApiError::denied(DenyReason::Unauthenticated))?;
    let tenant = principal
        .tenant()
        .ok_or_else(|| ApiError::denied(DenyReason::MissingPermission))?;
    if requested.is_some_and(|r| r != tenant) {
        return Err(ApiError::denied(DenyReason::CrossTenant));
    }
    let decision = store
        .read(tenant, |system| authorize(Some(principal), action, schemaid, system))
        .map_err(|_| ApiError::denied(DenyReason::Unauthenticated))?;
    match decision {
        Decision::Allow => Ok(tenant.to_string()),
        Decision::Deny(reason) => Err(ApiError::denied(reason)),
    }
}

pub(crate) fn parse_bool(params: &Params, key: &str, default: bool) -> ApiResult<bool> {
    match params.get(key).map(String::as_str) {
        None => Ok(default),
        Some("true" | "1" | "yes") => Ok(true),
        Some("false" | "0" | "no") => Ok(false),
        Some(other) => Err(ApiError::bad_request(format!("{key}: expected true or false, got {other:?}"))),
    }
}

/// Reads an uploaded file: the first file part of a multipart form, or the
/// raw request body. Returns the bytes and a name for diagnostics.
pub(crate) async fn upload_bytes(request: Request) -> ApiResult<(Bytes, String)> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !is_multipart {
        let bytes = Bytes::from_request(request, &()).await.map_err(|e| rejection(e.status(), e.body_text()))?;
        return Ok((bytes, "upload".to_string()));
    }
    let mut multipart = Multipart::from_request(request, &())
        .await
        .map_err(|e| rejection(e.status(), e.body_text()))?;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| rejection(e.status(), e.body_text()))?
    {
        let is_file = field.file_name().is_some() || field.name() == Some("file");
        if !is_file {
            continue;
        }
        let name = field
            .file_name()
            .or(field.name())
            .unwrap_or("upload")
            .to_string();
        let bytes = field.bytes().await.map_err(|e| rejection(e.status(), e.body_text()))?;
        return Ok((bytes, name));
    }
    Err(ApiError::bad_request("multipart body has no file part"))
}

fn rejection(status: StatusCode, text: String) -> ApiError {
    ApiError::new(ErrorCode::for_status(status), text)
}

/// Parses a JSON request body.
pub(crate) fn json_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}
