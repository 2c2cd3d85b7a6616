use axum::body::Bytes;
use axum::extract::State;
use axum::http::HeaderMap;
use axum::response::Response;
use reta_core::permission::{DenyReason, Principal};
use serde::Deserialize;

use super::{blocking, json_body, principal};
use crate::api::{ok, ApiError, ApiResult};
use crate::auth::dummy_verify;
use crate::AppState;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TenantLogin {
    tenant: String,
    password: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UserLogin {
    tenant: String,
    userid: String,
    password: String,
}

pub(super) async fn tenant_login(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let login: TenantLogin = json_body(&body)?;
    let store = state.store.clone();
    let tenant = login.tenant.clone();
    let verified = blocking(move || {
        let verified = store
            .read(&login.tenant, |s| s.tenant.password.verify(&login.password))
            .unwrap_or_else(|_| {
                dummy_verify(&login.password);
                false
            });
        Ok(verified)
    })
    .await?;
    if !verified {
        return Err(ApiError::auth_failure());
    }
    Ok(ok(state.sessions.issue(Principal::Tenant { tenant })))
}

pub(super) async fn user_login(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let login: UserLogin = json_body(&body)?;
    let store = state.store.clone();
    let (tenant, userid) = (login.tenant.clone(), login.userid.clone());
    let verified = blocking(move || {
        let found = store
            .read(&login.tenant, |s| s.user(&login.userid).map(|u| u.password.clone()))
            .ok()
            .flatten();
        Ok(match found {
            Some(digest) => digest.verify(&login.password),
            None => {
                dummy_verify(&login.password);
                false
            }
        })
    })
    .await?;
    if !verified {
        return Err(ApiError::auth_failure());
    }
    Ok(ok(state.sessions.issue(Principal::User { tenant, userid })))
}

pub(super) async fn logout(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.split_once(' '))
        .map(|(_, t)| t.trim().to_string());
    match token {
        Some(t) if state.sessions.revoke(&t) => Ok(ok(serde_json::json!({ "revoked": true }))),
        _ => Err(ApiError::denied(DenyReason::Unauthenticated)),
    }
}

pub(super) async fn whoami(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let principal = principal(&state, &headers).ok_or_else(|| ApiError::denied(DenyReason::Unauthenticated))?;
    Ok(ok(principal))
}
