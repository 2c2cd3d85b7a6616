//! Effective authorities and access decisions.
//!
//! A schema's entry user holds every permission on it. Other users receive the
//! union of the grants made to the groups they belong to; a user in none of
//! the granted groups receives the schema's `opermission`. Each schema
//! currently grants exactly one group (its owner) `gpermission`, so the union
//! reduces to: owner-group member gets `gpermission`, everyone else
//! `opermission`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Permission, PermissionSet, SchemaDef, SystemInstance, UserDef};

pub use crate::model::parse_permission_spec;

/// Who is acting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Principal {
    PlatformAdmin,
    Tenant { tenant: String },
    User { tenant: String, userid: String },
}

impl Principal {
    pub fn tenant(&self) -> Option<&str> {
        match self {
            Principal::PlatformAdmin => None,
            Principal::Tenant { tenant } | Principal::User { tenant, .. } => Some(tenant),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Create,
    Read,
    Update,
    Delete,
    /// Metadata management inside one system (groups, users, schemas).
    Admin,
    /// Platform-level tenant management.
    ManageTenants,
}

impl Action {
    pub fn permission(self) -> Option<Permission> {
        match self {
            Action::Create => Some(Permission::Create),
            Action::Read => Some(Permission::Read),
            Action::Update => Some(Permission::Update),
            Action::Delete => Some(Permission::Delete),
            Action::Admin | Action::ManageTenants => None,
        }
    }
}

impl From<Permission> for Action {
    fn from(p: Permission) -> Self {
        match p {
            Permission::Create => Action::Create,
            Permission::Read => Action::Read,
            Permission::Update => Action::Update,
            Permission::Delete => Action::Delete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    CrossTenant,
    MissingPermission,
    Unauthenticated,
    UnknownTarget,
}

impl DenyReason {
    pub fn code(self) -> &'static str {
        match self {
            DenyReason::CrossTenant => "cross-tenant",
            DenyReason::MissingPermission => "missing-permission",
            DenyReason::Unauthenticated => "unauthenticated",
            DenyReason::UnknownTarget => "unknown-target",
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(self) -> bool {
        self == Decision::Allow
    }
}

/// The parts of a system an access decision may look at.
pub trait SystemView {
    fn tenant_id(&self) -> &str;
    fn schema(&self, schemaid: &str) -> Option<&SchemaDef>;
    fn user(&self, userid: &str) -> Option<&UserDef>;
}

impl SystemView for SystemInstance {
    fn tenant_id(&self) -> &str {
        &self.tenant.id
    }

    fn schema(&self, schemaid: &str) -> Option<&SchemaDef> {
        SystemInstance::schema(self, schemaid)
    }

    fn user(&self, userid: &str) -> Option<&UserDef> {
        SystemInstance::user(self, userid)
    }
}

/// Group grants of a schema.
fn grants(schema: &SchemaDef) -> impl Iterator<Item = (&str, PermissionSet)> {
    std::iter::once((schema.group.as_str(), schema.gpermission))
}

/// Permissions of `user` on `schema`, both already resolved.
pub fn permissions_for(user: &UserDef, schema: &SchemaDef) -> PermissionSet {
    if user.userid == schema.entry {
        return PermissionSet::FULL;
    }
    let mut member_of_any = false;
    let mut granted = PermissionSet::EMPTY;
    for (group, set) in grants(schema) {
        if user.is_member_of(group) {
            member_of_any = true;
            granted = granted.union(set);
        }
    }
    if member_of_any {
        granted
    } else {
        schema.opermission
    }
}

pub fn effective_permissions(userid: &str, schemaid: &str, system: &impl SystemView) -> Result<PermissionSet> {
    let user = system
        .user(userid)
        .ok_or_else(|| Error::UnknownUser(userid.to_string()))?;
    let schema = system
        .schema(schemaid)
        .ok_or_else(|| Error::UnknownSchema(schemaid.to_string()))?;
    Ok(permissions_for(user, schema))
}

/// Decides whether `principal` may perform `action` in `system`.
///
/// The tenant check runs before anything else in `system` is read.
pub fn authorize(principal: Option<&Principal>, action: Action, schemaid: Option<&str>, system: &impl SystemView) -> Decision {
    let Some(principal) = principal else {
        return Decision::Deny(DenyReason::Unauthenticated);
    };
    match principal {
        Principal::PlatformAdmin => {
            if action == Action::ManageTenants {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::MissingPermission)
            }
        }
        Principal::Tenant { tenant } => {
            if tenant != system.tenant_id() {
                return Decision::Deny(DenyReason::CrossTenant);
            }
            match (action, schemaid) {
                (Action::ManageTenants, _) => Decision::Deny(DenyReason::MissingPermission),
                (_, Some(id)) if system.schema(id).is_none() => Decision::Deny(DenyReason::UnknownTarget),
                _ => Decision::Allow,
            }
        }
        Principal::User { tenant, userid } => {
            if tenant != system.tenant_id() {
                return Decision::Deny(DenyReason::CrossTenant);
            }
            let Some(needed) = action.permission() else {
                return Decision::Deny(DenyReason::MissingPermission);
            };
            let Some(user) = system.user(userid) else {
                return Decision::Deny(DenyReason::Unauthenticated);
            };
            let Some(schema) = schemaid.and_then(|id| system.schema(id)) else {
                return Decision::Deny(DenyReason::UnknownTarget);
            };
            if permissions_for(user, schema).contains(needed) {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::MissingPermission)
            }
        }
    }
}
