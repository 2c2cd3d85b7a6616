use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use reta_core::data::{values_from_json, Aggregate, Order, Page, Query as RecordQuery};
use reta_core::permission::{effective_permissions, Action, DenyReason, Principal};
use reta_core::{Error, FilterExpr, Permission, PermissionSet, RecordId, SystemInstance};
use serde_json::json;

use super::meta::SchemaView;
use super::{authorize_in_tenant, blocking, json_body, parse_bool, principal, upload_bytes, Params};
use crate::api::{ok, ok_with, ApiError, ApiResult, ErrorCode};
use crate::AppState;

const MAX_PAGE: usize = 10_000;

fn tenant_param(params: &Params) -> Option<&str> {
    params.get("tenant").map(String::as_str)
}

fn record_id(schemaid: &str, text: &str) -> ApiResult<RecordId> {
    text.parse().map_err(|_| {
        Error::UnknownRecord {
            schema: schemaid.to_string(),
            id: text.to_string(),
        }
        .into()
    })
}

fn json_object(body: &[u8]) -> ApiResult<serde_json::Map<String, serde_json::Value>> {
    match json_body::<serde_json::Value>(body)? {
        serde_json::Value::Object(map) => Ok(map),
        _ => Err(ApiError::bad_request("expected a JSON object of field values")),
    }
}

fn filter_param(params: &Params) -> ApiResult<FilterExpr> {
    match params.get("filter") {
        None => Ok(FilterExpr::default()),
        Some(text) if text.trim().is_empty() => Ok(FilterExpr::default()),
        Some(text) => serde_json::from_str(text)
            .map_err(|e| ApiError::new(ErrorCode::BadFilter, format!("malformed filter: {e}"))),
    }
}

fn usize_param(params: &Params, key: &str) -> ApiResult<Option<usize>> {
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_request(format!("{key}: expected a non-negative integer, got {v:?}")))
        })
        .transpose()
}

/// The caller's permissions on one schema. Tenants hold every permission.
fn caller_permissions(system: &SystemInstance, principal: &Principal, schemaid: &str) -> Result<PermissionSet, Error> {
    match principal {
        Principal::User { userid, .. } => effective_permissions(userid, schemaid, system),
        _ => system.schema_or_err(schemaid).map(|_| PermissionSet::FULL),
    }
}

pub(super) async fn schemas(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let principal = caller.ok_or_else(|| ApiError::denied(DenyReason::Unauthenticated))?;
        let tenant = confine(&principal, tenant_param(&params))?;
        let listing = store
            .read(&tenant, |s| {
                s.schemas
                    .iter()
                    .map(|schema| {
                        let permissions = caller_permissions(s, &principal, &schema.schemaid).unwrap_or_default();
                        json!({
                            "schemaid": schema.schemaid,
                            "permissions": permissions,
                            "records": s.data.get(&schema.schemaid).map_or(0, |c| c.len()),
                        })
                    })
                    .collect::<Vec<_>>()
            })
            .map_err(|_| ApiError::denied(DenyReason::Unauthenticated))?;
        Ok(listing)
    })
    .await?;
    Ok(ok(data))
}

/// The tenant an authenticated caller may act on.
fn confine(principal: &Principal, requested: Option<&str>) -> ApiResult<String> {
    let tenant = principal
        .tenant()
        .ok_or_else(|| ApiError::denied(DenyReason::MissingPermission))?;
    if requested.is_some_and(|r| r != tenant) {
        return Err(ApiError::denied(DenyReason::CrossTenant));
    }
    Ok(tenant.to_string())
}

pub(super) async fn permissions(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(schemaid): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let principal = caller.ok_or_else(|| ApiError::denied(DenyReason::Unauthenticated))?;
        let tenant = confine(&principal, tenant_param(&params))?;
        let (permissions, view) = store
            .read(&tenant, |s| {
                let permissions = caller_permissions(s, &principal, &schemaid)?;
                let view = s.schema(&schemaid).map(SchemaView::from);
                Ok::<_, Error>((permissions, view))
            })
            .map_err(|_| ApiError::denied(DenyReason::Unauthenticated))?
            .map_err(|e| match e {
                Error::UnknownUser(_) => ApiError::denied(DenyReason::Unauthenticated),
                Error::UnknownSchema(_) => ApiError::denied(DenyReason::UnknownTarget),
                other => other.into(),
            })?;
        Ok(json!({
            "schemaid": schemaid,
            "permissions": permissions,
            "create": permissions.contains(Permission::Create),
            "read": permissions.contains(Permission::Read),
            "update": permissions.contains(Permission::Update),
            "delete": permissions.contains(Permission::Delete),
            "schema": view,
        }))
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn create(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(schemaid): Path<String>,
    Query(params): Query<Params>,
    body: Bytes,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let record = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Create, Some(&schemaid))?;
        let object = json_object(&body)?;
        let values = store.read(&tenant, |s| values_from_json(s.schema_or_err(&schemaid)?, &object))??;
        let id = store.insert_record(&tenant, &schemaid, &values)?;
        record_json(&store, &tenant, &schemaid, id)
    })
    .await?;
    Ok(ok_with(StatusCode::CREATED, record))
}

fn record_json(store: &reta_core::Store, tenant: &str, schemaid: &str, id: RecordId) -> ApiResult<serde_json::Value> {
    let json = store.read(tenant, |s| -> Result<_, Error> {
        let schema = s.schema_or_err(schemaid)?;
        Ok(s.get_record(schemaid, id)?.to_json(schema))
    })??;
    Ok(json)
}

pub(super) async fn list(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(schemaid): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let filter = filter_param(&params)?;
    let order = match params.get("sort").filter(|s| !s.is_empty()) {
        Some(text) => Some(
            Order::parse(text)
                .ok_or_else(|| ApiError::bad_request(format!("sort: expected field, field:asc or field:desc, got {text:?}")))?,
        ),
        None => None,
    };
    let offset = usize_param(&params, "offset")?.unwrap_or(0);
    let limit = usize_param(&params, "limit")?.map(|l| l.min(MAX_PAGE));
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Read, Some(&schemaid))?;
        let query = RecordQuery {
            filter,
            page: Page { offset, limit },
            order,
        };
        let result = store.query(&tenant, &schemaid, &query)?;
        let records = store.read(&tenant, |s| -> Result<_, Error> {
            let schema = s.schema_or_err(&schemaid)?;
            Ok(result.records.iter().map(|r| r.to_json(schema)).collect::<Vec<_>>())
        })??;
        Ok(json!({
            "records": records,
            "total": result.total,
            "offset": offset,
            "limit": limit,
        }))
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn show(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((schemaid, id)): Path<(String, String)>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Read, Some(&schemaid))?;
        let id = record_id(&schemaid, &id)?;
        record_json(&store, &tenant, &schemaid, id)
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn update(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((schemaid, id)): Path<(String, String)>,
    Query(params): Query<Params>,
    body: Bytes,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Update, Some(&schemaid))?;
        let id = record_id(&schemaid, &id)?;
        let object = json_object(&body)?;
        let values = store.read(&tenant, |s| values_from_json(s.schema_or_err(&schemaid)?, &object))??;
        store.update_record(&tenant, &schemaid, id, &values)?;
        record_json(&store, &tenant, &schemaid, id)
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn delete(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((schemaid, id)): Path<(String, String)>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Delete, Some(&schemaid))?;
        let id = record_id(&schemaid, &id)?;
        store.delete_record(&tenant, &schemaid, id)?;
        Ok(json!({ "deleted": id }))
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn import(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(schemaid): Path<String>,
    Query(params): Query<Params>,
    request: Request,
) -> ApiResult<Response> {
    let atomic = parse_bool(&params, "atomic", true)?;
    let caller = principal(&state, &headers);
    // Checked before the body is read so a refused upload costs nothing.
    let store = state.store.clone();
    let check = (caller.clone(), params.clone(), schemaid.clone());
    let tenant = blocking(move || {
        let (caller, params, schemaid) = check;
        authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Create, Some(&schemaid))
    })
    .await?;
    let (bytes, origin) = upload_bytes(request).await?;
    let store = state.store.clone();
    let outcome = blocking(move || {
        let document = reta_core::TabularDocument::from_bytes(&bytes, &origin)?;
        Ok(store.import(&tenant, &schemaid, &document, atomic)?)
    })
    .await?;
    Ok(ok(outcome))
}

pub(super) async fn export(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(schemaid): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    match params.get("format").map(String::as_str) {
        None | Some("csv") => {}
        Some(other) => return Err(ApiError::bad_request(format!("format: only csv is supported, got {other:?}"))),
    }
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let name = format!("{schemaid}.csv");
    let bytes = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Read, Some(&schemaid))?;
        Ok(store.export(&tenant, &schemaid)?.to_csv())
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{name}\"")),
        ],
        bytes,
    )
        .into_response())
}

pub(super) async fn stats(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(schemaid): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let field = params
        .get("field")
        .cloned()
        .ok_or_else(|| ApiError::new(ErrorCode::BadAggregation, "field is required"))?;
    let agg_text = params.get("agg").map_or("count", String::as_str);
    let agg = Aggregate::parse(agg_text)
        .ok_or_else(|| ApiError::new(ErrorCode::BadAggregation, format!("unknown aggregation {agg_text:?}")))?;
    let filter = filter_param(&params)?;
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), tenant_param(&params), Action::Read, Some(&schemaid))?;
        let value = store.statistics(&tenant, &schemaid, &field, agg, &filter)?;
        Ok(json!({ "field": field, "agg": agg, "value": value.to_json() }))
    })
    .await?;
    Ok(ok(data))
}
