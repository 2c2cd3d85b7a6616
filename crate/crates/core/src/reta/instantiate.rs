use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::PasswordDigest;
use crate::error::{Error, Result};
use crate::model::{Collection, GroupDef, SystemInstance, TenantDescriptor, UserDef};
use crate::reta::interpret::interpret;
use crate::reta::parse::ReTaDocument;
use crate::validate::validate_instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Register a new tenant; fails if the tenant id is taken.
    #[default]
    Create,
    /// Replace an existing tenant's metadata. The table's tenant password
    /// must match the stored one.
    Replace,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "create" => Ok(Mode::Create),
            "replace" => Ok(Mode::Replace),
            other => Err(format!("unknown mode {other:?} (expected create or replace)")),
        }
    }
}

/// Builds the system a table describes.
///
/// `existing` is the tenant's current system, if any. In replace mode the
/// records of each schema whose field list is unchanged are carried over,
/// along with password digests whose plaintext is unchanged, so replacing
/// with an identical table is a no-op.
pub fn build_instance(reta: &ReTaDocument, existing: Option<&SystemInstance>, mode: Mode) -> Result<SystemInstance> {
    let (draft, report) = interpret(reta);
    if !report.is_empty() {
        return Err(Error::Invalid(report));
    }
    let existing = match (mode, existing) {
        (Mode::Create, Some(_)) => return Err(Error::DuplicateTenant(draft.tenant_id)),
        (Mode::Create, None) => None,
        (Mode::Replace, None) => return Err(Error::UnknownTenant(draft.tenant_id)),
        (Mode::Replace, Some(current)) => {
            if !current.tenant.password.verify(&draft.tenant_password) {
                return Err(Error::AuthFailure);
            }
            Some(current)
        }
    };

    let keep_digest = |old: Option<&PasswordDigest>, plain: &str| match old {
        Some(d) if d.verify(plain) => d.clone(),
        _ => PasswordDigest::new(plain),
    };

    let tenant = TenantDescriptor {
        password: keep_digest(existing.map(|e| &e.tenant.password), &draft.tenant_password),
        id: draft.tenant_id,
        system_name: draft.system_name,
    };
    let mut system = SystemInstance::new(tenant);
    system.groups = draft
        .groups
        .into_iter()
        .map(|groupid| GroupDef { groupid })
        .collect();
    system.users = draft
        .users
        .into_iter()
        .map(|u| {
            let old = existing.and_then(|e| e.user(&u.userid)).map(|o| &o.password);
            UserDef {
                password: keep_digest(old, &u.password),
                userid: u.userid,
                username: u.username,
                memberships: u.memberships,
            }
        })
        .collect();
    for schema in &draft.schemas {
        let retained = existing
            .and_then(|e| e.schema(&schema.schemaid).map(|old| (e, old)))
            .filter(|(_, old)| old.fields == schema.fields)
            .and_then(|(e, _)| e.data.get(&schema.schemaid).cloned());
        system
            .data
            .insert(schema.schemaid.clone(), retained.unwrap_or_else(Collection::default));
    }
    system.schemas = draft.schemas;

    let report = validate_instance(&system);
    if !report.is_empty() {
        return Err(Error::Invalid(report));
    }
    Ok(system)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreationEntry {
    pub tenant: String,
    pub at: DateTime<Utc>,
}

/// All systems hosted on one platform, keyed by tenant id.
#[derive(Debug, Clone, Default)]
pub struct Platform {
    systems: BTreeMap<String, SystemInstance>,
    creation_log: Vec<CreationEntry>,
}

impl Platform {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn get_system(&self, tenant: &str) -> Result<&SystemInstance> {
        self.systems
            .get(tenant)
            .ok_or_else(|| Error::UnknownTenant(tenant.to_string()))
    }

    pub fn get_system_mut(&mut self, tenant: &str) -> Result<&mut SystemInstance> {
        self.systems
            .get_mut(tenant)
            .ok_or_else(|| Error::UnknownTenant(tenant.to_string()))
    }

    pub fn systems(&self) -> impl Iterator<Item = &SystemInstance> {
        self.systems.values()
    }

    pub fn creation_log(&self) -> &[CreationEntry] {
        &self.creation_log
    }

    /// Removes a system together with all of its records.
    pub fn delete_system(&mut self, tenant: &str) -> Result<SystemInstance> {
        self.systems
            .remove(tenant)
            .ok_or_else(|| Error::UnknownTenant(tenant.to_string()))
    }

    pub(crate) fn insert_system(&mut self, system: SystemInstance, created: Option<DateTime<Utc>>) {
        if let Some(at) = created {
            self.creation_log.push(CreationEntry {
                tenant: system.tenant.id.clone(),
                at,
            });
        }
        self.systems.insert(system.tenant.id.clone(), system);
    }
}

/// Runs a validated table through the engine against `platform`.
pub fn instantiate<'p>(reta: &ReTaDocument, platform: &'p mut Platform, mode: Mode) -> Result<&'p SystemInstance> {
    let tenant = reta.tenant.id.text.clone();
    let system = build_instance(reta, platform.systems.get(&tenant), mode)?;
    let created = (mode == Mode::Create).then(Utc::now);
    platform.insert_system(system, created);
    platform.get_system(&tenant)
}
