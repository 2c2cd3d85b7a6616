use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use reta_core::error::ParseError;
use reta_core::permission::{DenyReason, Principal};
use reta_core::report::Diagnostic;
use reta_core::reta::{parse_metadata_table, validate_reta, Mode};
use reta_core::tabular::TabularDocument;
use serde::Serialize;
use serde_json::json;

use super::{blocking, parse_bool, principal, upload_bytes, Params};
use crate::api::{ok, ok_with, ApiError, ApiResult};
use crate::AppState;

pub(super) async fn health(State(state): State<AppState>) -> Response {
    ok(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "tenants": state.store.tenants().len(),
    }))
}

fn require_admin(principal: Option<&Principal>) -> ApiResult<()> {
    match principal {
        Some(Principal::PlatformAdmin) => Ok(()),
        Some(_) => Err(ApiError::denied(DenyReason::MissingPermission)),
        None => Err(ApiError::denied(DenyReason::Unauthenticated)),
    }
}

pub(super) async fn list(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(principal(&state, &headers).as_ref())?;
    let store = state.store.clone();
    let summaries = blocking(move || {
        Ok(store
            .tenants()
            .iter()
            .filter_map(|t| store.read(t, |s| s.summary()).ok())
            .collect::<Vec<_>>())
    })
    .await?;
    Ok(ok(summaries))
}

/// Summary of one system, for the administrator or the tenant itself.
pub(super) async fn show(State(state): State<AppState>, headers: HeaderMap, Path(tenant): Path<String>) -> ApiResult<Response> {
    match principal(&state, &headers) {
        Some(Principal::PlatformAdmin) => {}
        Some(Principal::Tenant { tenant: own }) if own == tenant => {}
        Some(Principal::User { tenant: own, .. }) if own == tenant => {
            return Err(ApiError::denied(DenyReason::MissingPermission))
        }
        Some(_) => return Err(ApiError::denied(DenyReason::CrossTenant)),
        None => return Err(ApiError::denied(DenyReason::Unauthenticated)),
    }
    let summary = state.store.read(&tenant, |s| s.summary())?;
    Ok(ok(summary))
}

pub(super) async fn delete(State(state): State<AppState>, headers: HeaderMap, Path(tenant): Path<String>) -> ApiResult<Response> {
    require_admin(principal(&state, &headers).as_ref())?;
    let store = state.store.clone();
    let id = tenant.clone();
    blocking(move || store.delete_system(&id).map_err(ApiError::from)).await?;
    state.sessions.revoke_tenant(&tenant);
    Ok(ok(json!({ "deleted": tenant })))
}

#[derive(Serialize)]
struct DryRun {
    valid: bool,
    tenant: Option<String>,
    tenant_exists: bool,
    document: TabularDocument,
    parse_errors: Vec<ParseError>,
    diagnostics: Vec<Diagnostic>,
}

pub(super) async fn upload(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<Params>,
    request: Request,
) -> ApiResult<Response> {
    let mode: Mode = match params.get("mode") {
        Some(m) => m.parse().map_err(ApiError::bad_request)?,
        None => Mode::Create,
    };
    let dry_run = parse_bool(&params, "dry_run", false)?;
    let caller = principal(&state, &headers);
    let (bytes, origin) = upload_bytes(request).await?;
    let store = state.store.clone();

    if dry_run {
        let report = blocking(move || {
            let document = TabularDocument::from_bytes(&bytes, &origin)?;
            let (parse_errors, diagnostics, tenant) = match parse_metadata_table(&document) {
                Ok(reta) => {
                    let report = validate_reta(&reta);
                    (Vec::new(), report.iter().cloned().collect(), Some(reta.tenant.id.text))
                }
                Err(errors) => (errors.0, Vec::new(), None),
            };
            let tenant_exists = tenant.as_deref().is_some_and(|t| store.contains(t));
            Ok(DryRun {
                valid: parse_errors.is_empty() && diagnostics.is_empty(),
                tenant,
                tenant_exists,
                document,
                parse_errors,
                diagnostics,
            })
        })
        .await?;
        return Ok(ok(report));
    }

    let summary = blocking(move || {
        let document = TabularDocument::from_bytes(&bytes, &origin)?;
        let reta = parse_metadata_table(&document).map_err(reta_core::Error::Parse)?;
        if mode == Mode::Replace {
            let target = reta.tenant.id.text.as_str();
            match &caller {
                Some(Principal::Tenant { tenant }) if tenant == target => {}
                Some(Principal::Tenant { .. }) => return Err(ApiError::denied(DenyReason::CrossTenant)),
                Some(_) => return Err(ApiError::denied(DenyReason::MissingPermission)),
                None => return Err(ApiError::denied(DenyReason::Unauthenticated)),
            }
        }
        Ok(store.instantiate(&reta, mode)?)
    })
    .await?;
    let status = match mode {
        Mode::Create => StatusCode::CREATED,
        Mode::Replace => StatusCode::OK,
    };
    Ok(ok_with(status, summary))
}
