//! Tenant-only metadata administration. Every edit revalidates the whole
//! system, exactly as a replace upload would.

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::Response;
use reta_core::error::FieldIssue;
use reta_core::permission::Action;
use reta_core::{
    Error, FieldDef, FieldType, GroupDef, OtherAttribute, PasswordDigest, PermissionSet, SchemaDef, SystemInstance,
    UserDef,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{authorize_in_tenant, blocking, json_body, principal, Params};
use crate::api::{ok, ApiError, ApiResult, ErrorCode};
use crate::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Groups,
    Users,
    Schemas,
}

impl Kind {
    fn parse(text: &str) -> ApiResult<Kind> {
        match text {
            "groups" => Ok(Kind::Groups),
            "users" => Ok(Kind::Users),
            "schemas" => Ok(Kind::Schemas),
            _ => Err(ApiError::new(ErrorCode::NotFound, "no such route")),
        }
    }
}

#[derive(Serialize)]
pub(super) struct UserView {
    userid: String,
    username: String,
    groups: Vec<String>,
}

impl From<&UserDef> for UserView {
    fn from(u: &UserDef) -> Self {
        UserView {
            userid: u.userid.clone(),
            username: u.username.clone(),
            groups: u.memberships.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UserBody {
    username: String,
    #[serde(default)]
    password: Option<String>,
    #[serde(default)]
    groups: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct FieldWire {
    fname: String,
    ftype: String,
    #[serde(default)]
    attributes: Vec<String>,
}

#[derive(Serialize)]
pub(super) struct SchemaView {
    schemaid: String,
    group: String,
    entry: String,
    gpermission: PermissionSet,
    opermission: PermissionSet,
    fields: Vec<FieldWire>,
}

impl From<&SchemaDef> for SchemaView {
    fn from(s: &SchemaDef) -> Self {
        SchemaView {
            schemaid: s.schemaid.clone(),
            group: s.group.clone(),
            entry: s.entry.clone(),
            gpermission: s.gpermission,
            opermission: s.opermission,
            fields: s
                .fields
                .iter()
                .map(|f| FieldWire {
                    fname: f.fname.clone(),
                    ftype: f.ftype.to_string(),
                    attributes: f.attributes.iter().map(OtherAttribute::token).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaBody {
    group: String,
    entry: String,
    gpermission: String,
    opermission: String,
    fields: Vec<FieldWire>,
}

impl SchemaBody {
    fn into_schema(self, schemaid: String) -> ApiResult<SchemaDef> {
        let mut issues = Vec::new();
        let mut permission = |name: &str, text: &str| {
            reta_core::parse_permission_spec(text).unwrap_or_else(|e| {
                issues.push(FieldIssue {
                    field: name.to_string(),
                    message: e.to_string(),
                });
                PermissionSet::EMPTY
            })
        };
        let gpermission = permission("gpermission", &self.gpermission);
        let opermission = permission("opermission", &self.opermission);
        let mut fields = Vec::new();
        for wire in self.fields {
            let Some(ftype) = FieldType::from_keyword(&wire.ftype) else {
                issues.push(FieldIssue {
                    field: wire.fname.clone(),
                    message: format!("unknown ftype {:?}", wire.ftype),
                });
                continue;
            };
            let mut field = FieldDef::new(wire.fname.clone(), ftype);
            for token in &wire.attributes {
                match OtherAttribute::parse(token, ftype) {
                    Ok(a) => field = field.with(a),
                    Err(message) => issues.push(FieldIssue {
                        field: wire.fname.clone(),
                        message,
                    }),
                }
            }
            fields.push(field);
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues).into());
        }
        Ok(SchemaDef {
            schemaid,
            group: self.group,
            entry: self.entry,
            gpermission,
            opermission,
            fields,
        })
    }
}

fn view(system: &SystemInstance, kind: Kind, id: &str) -> Option<serde_json::Value> {
    let value = match kind {
        Kind::Groups => system.has_group(id).then(|| json!({ "groupid": id }))?,
        Kind::Users => serde_json::to_value(UserView::from(system.user(id)?)).ok()?,
        Kind::Schemas => serde_json::to_value(SchemaView::from(system.schema(id)?)).ok()?,
    };
    Some(value)
}

fn views(system: &SystemInstance, kind: Kind) -> Vec<serde_json::Value> {
    let ids: Vec<&str> = match kind {
        Kind::Groups => system.groups.iter().map(|g| g.groupid.as_str()).collect(),
        Kind::Users => system.users.iter().map(|u| u.userid.as_str()).collect(),
        Kind::Schemas => system.schemas.iter().map(|s| s.schemaid.as_str()).collect(),
    };
    ids.into_iter().filter_map(|id| view(system, kind, id)).collect()
}

fn unknown(kind: Kind, id: &str) -> ApiError {
    let what = match kind {
        Kind::Groups => "group",
        Kind::Users => "user",
        Kind::Schemas => "schema",
    };
    ApiError::new(ErrorCode::UnknownTarget, format!("unknown {what} {id:?}"))
}

pub(super) async fn overview(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), params.get("tenant").map(String::as_str), Action::Admin, None)?;
        Ok(store.read(&tenant, |s| {
            json!({
                "summary": s.summary(),
                "groups": views(s, Kind::Groups),
                "users": views(s, Kind::Users),
                "schemas": views(s, Kind::Schemas),
            })
        })?)
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn list(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(kind): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let kind = Kind::parse(&kind)?;
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), params.get("tenant").map(String::as_str), Action::Admin, None)?;
        Ok(store.read(&tenant, |s| views(s, kind))?)
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn show(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((kind, id)): Path<(String, String)>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let kind = Kind::parse(&kind)?;
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), params.get("tenant").map(String::as_str), Action::Admin, None)?;
        store.read(&tenant, |s| view(s, kind, &id))?.ok_or_else(|| unknown(kind, &id))
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn put(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((kind, id)): Path<(String, String)>,
    Query(params): Query<Params>,
    body: Bytes,
) -> ApiResult<Response> {
    let kind = Kind::parse(&kind)?;
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    let data = blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), params.get("tenant").map(String::as_str), Action::Admin, None)?;
        match kind {
            Kind::Groups => {
                store.update_metadata(&tenant, |s| {
                    if !s.has_group(&id) {
                        s.groups.push(GroupDef { groupid: id.clone() });
                    }
                    Ok(())
                })?;
            }
            Kind::Users => {
                let body: UserBody = json_body(&body)?;
                let digest = body.password.as_deref().map(PasswordDigest::new);
                store.update_metadata(&tenant, |s| {
                    let existing = s.users.iter().position(|u| u.userid == id);
                    let password = match (digest, existing) {
                        (Some(d), _) => d,
                        (None, Some(i)) => s.users[i].password.clone(),
                        (None, None) => {
                            return Err(Error::Validation(vec![FieldIssue {
                                field: "password".into(),
                                message: "required for a new user".into(),
                            }]))
                        }
                    };
                    let user = UserDef {
                        userid: id.clone(),
                        username: body.username,
                        password,
                        memberships: body.groups,
                    };
                    match existing {
                        Some(i) => s.users[i] = user,
                        None => s.users.push(user),
                    }
                    Ok(())
                })?;
            }
            Kind::Schemas => {
                let body: SchemaBody = json_body(&body)?;
                let schema = body.into_schema(id.clone())?;
                store.update_metadata(&tenant, |s| {
                    match s.schemas.iter().position(|x| x.schemaid == id) {
                        Some(i) => s.schemas[i] = schema,
                        None => s.schemas.push(schema),
                    }
                    Ok(())
                })?;
            }
        }
        store.read(&tenant, |s| view(s, kind, &id))?.ok_or_else(|| unknown(kind, &id))
    })
    .await?;
    Ok(ok(data))
}

pub(super) async fn delete(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((kind, id)): Path<(String, String)>,
    Query(params): Query<Params>,
) -> ApiResult<Response> {
    let kind = Kind::parse(&kind)?;
    let caller = principal(&state, &headers);
    let store = state.store.clone();
    blocking(move || {
        let tenant = authorize_in_tenant(&store, caller.as_ref(), params.get("tenant").map(String::as_str), Action::Admin, None)?;
        let mut found = false;
        store.update_metadata(&tenant, |s| {
            let before = match kind {
                Kind::Groups => s.groups.len(),
                Kind::Users => s.users.len(),
                Kind::Schemas => s.schemas.len(),
            };
            let after = match kind {
                Kind::Groups => {
                    s.groups.retain(|g| g.groupid != id);
                    s.groups.len()
                }
                Kind::Users => {
                    s.users.retain(|u| u.userid != id);
                    s.users.len()
                }
                Kind::Schemas => {
                    s.schemas.retain(|x| x.schemaid != id);
                    s.schemas.len()
                }
            };
            found = after < before;
            Ok(())
        })?;
        if found {
            Ok(())
        } else {
            Err(unknown(kind, &id))
        }
    })
    .await?;
    Ok(ok(json!({ "deleted": true })))
}
