//! Verification and interpretation of a parsed requirements table.
//!
//! Validation and instantiation share [`interpret`], so a table validates
//! clean exactly when it can be turned into a system.

use std::collections::HashSet;

use crate::model::{
    is_valid_identifier, parse_permission_spec, FieldDef, FieldType, OtherAttribute, PermissionSet, SchemaDef,
};
use crate::report::{Diagnostic, Rule, ValidationReport};
use crate::reta::parse::{Cell, FieldRow, ReTaDocument};
use crate::validate::{attribute_problems, is_valid_group_id};

/// A user as declared in the table, password still in plaintext.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DraftUser {
    pub userid: String,
    pub username: String,
    pub password: String,
    pub memberships: Vec<String>,
}

/// The interpreted content of a valid table.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Draft {
    pub tenant_id: String,
    pub tenant_password: String,
    pub system_name: String,
    pub groups: Vec<String>,
    pub users: Vec<DraftUser>,
    pub schemas: Vec<SchemaDef>,
}

/// Positioned checks of a parsed table. Empty iff [`crate::reta::instantiate`]
/// will accept it.
pub fn validate_reta(reta: &ReTaDocument) -> ValidationReport {
    interpret(reta).1
}

pub(crate) fn interpret(reta: &ReTaDocument) -> (Draft, ValidationReport) {
    let mut report = ValidationReport::default();
    let mut err = |rule: Rule, cell: &Cell, message: String, entity: Option<&str>| {
        let mut d = Diagnostic::error(rule, message).at(cell.row, cell.column);
        d.entity = entity.map(str::to_string);
        report.push(d);
    };

    let t = &reta.tenant;
    check_id(&t.id, "tenant id", is_valid_identifier, &mut err);
    if t.password.text.is_empty() {
        err(Rule::EmptyCell, &t.password, "empty tenant password".into(), Some(&t.id.text));
    }

    let mut seen = HashSet::new();
    for g in &reta.groups {
        check_id(g, "groupid", is_valid_group_id, &mut err);
        if !seen.insert(g.text.as_str()) {
            err(Rule::DuplicateId, g, format!("duplicate groupid {:?}", g.text), Some(&g.text));
        }
    }
    let declared_groups = seen;

    let mut seen = HashSet::new();
    let mut users = Vec::new();
    for u in &reta.users {
        check_id(&u.userid, "userid", is_valid_identifier, &mut err);
        if !u.userid.text.is_empty() && !seen.insert(u.userid.text.as_str()) {
            err(
                Rule::DuplicateId,
                &u.userid,
                format!("duplicate userid {:?}", u.userid.text),
                Some(&u.userid.text),
            );
        }
        if u.password.text.is_empty() {
            err(
                Rule::EmptyCell,
                &u.password,
                format!("empty password for user {:?}", u.userid.text),
                Some(&u.userid.text),
            );
        }
        let memberships = split_groups(&u.groups.text);
        let mut reported = HashSet::new();
        for g in &memberships {
            if !declared_groups.contains(g.as_str()) && reported.insert(g.clone()) {
                err(
                    Rule::Cr1,
                    &u.groups,
                    format!("user {:?}: unknown groupid {g:?}", u.userid.text),
                    Some(&u.userid.text),
                );
            }
        }
        users.push(DraftUser {
            userid: u.userid.text.clone(),
            username: u.username.text.clone(),
            password: u.password.text.clone(),
            memberships,
        });
    }
    let declared_users = seen;

    let mut seen = HashSet::new();
    let mut schemas = Vec::new();
    for block in &reta.schemas {
        let id = block.schemaid.text.as_str();
        check_id(&block.schemaid, "schemaid", is_valid_identifier, &mut err);
        if !id.is_empty() && !seen.insert(id) {
            err(Rule::DuplicateId, &block.schemaid, format!("duplicate schemaid {id:?}"), Some(id));
        }
        if !declared_groups.contains(block.group.text.as_str()) {
            err(
                Rule::Cr2,
                &block.group,
                format!("schema {id:?}: unknown groupid {:?}", block.group.text),
                Some(id),
            );
        }
        if !declared_users.contains(block.entry.text.as_str()) {
            err(
                Rule::Cr2,
                &block.entry,
                format!("schema {id:?}: unknown entry user {:?}", block.entry.text),
                Some(id),
            );
        }
        let mut permission = |cell: &Cell| match parse_permission_spec(&cell.text) {
            Ok(p) => p,
            Err(e) => {
                err(Rule::InvalidPermission, cell, e.to_string(), Some(id));
                PermissionSet::EMPTY
            }
        };
        let gpermission = permission(&block.gpermission);
        let opermission = permission(&block.opermission);

        if block.fields.is_empty() {
            let cell = Cell {
                text: String::new(),
                row: block.row,
                column: 1,
            };
            err(Rule::Cr3, &cell, format!("schema {id:?} declares no fields"), Some(id));
        }
        let mut names = HashSet::new();
        let mut fields = Vec::new();
        for row in &block.fields {
            let entity = format!("{id}.{}", row.fname.text);
            check_id(&row.fname, "field name", is_valid_identifier, &mut err);
            if !row.fname.text.is_empty() && !names.insert(row.fname.text.as_str()) {
                err(
                    Rule::DuplicateId,
                    &row.fname,
                    format!("schema {id:?}: duplicate field {:?}", row.fname.text),
                    Some(&entity),
                );
            }
            let Some(ftype) = FieldType::from_keyword(&row.ftype.text) else {
                err(
                    Rule::UnknownFieldType,
                    &row.ftype,
                    format!("unknown ftype {:?}", row.ftype.text),
                    Some(&entity),
                );
                continue;
            };
            fields.push(interpret_field(row, ftype, &entity, &mut err));
        }
        schemas.push(SchemaDef {
            schemaid: id.to_string(),
            group: block.group.text.clone(),
            entry: block.entry.text.clone(),
            gpermission,
            opermission,
            fields,
        });
    }

    let draft = Draft {
        tenant_id: t.id.text.clone(),
        tenant_password: t.password.text.clone(),
        system_name: t.system_name.text.clone(),
        groups: reta.groups.iter().map(|c| c.text.clone()).collect(),
        users,
        schemas,
    };
    report.diagnostics.sort_by_key(|d| (d.row, d.column));
    (draft, report)
}

/// Splits a `subG` cell on `;`, dropping empty segments.
pub(crate) fn split_groups(text: &str) -> Vec<String> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn check_id(
    cell: &Cell,
    what: &str,
    valid: fn(&str) -> bool,
    err: &mut impl FnMut(Rule, &Cell, String, Option<&str>),
) {
    if cell.text.is_empty() {
        err(Rule::EmptyCell, cell, format!("empty {what}"), None);
    } else if !valid(&cell.text) {
        err(
            Rule::InvalidIdentifier,
            cell,
            format!("invalid {what} {:?}", cell.text),
            Some(&cell.text),
        );
    }
}

fn interpret_field(
    row: &FieldRow,
    ftype: FieldType,
    entity: &str,
    err: &mut impl FnMut(Rule, &Cell, String, Option<&str>),
) -> FieldDef {
    let mut field = FieldDef::new(row.fname.text.clone(), ftype);
    for cell in &row.attributes {
        let attr = match OtherAttribute::parse(&cell.text, ftype) {
            Ok(a) => a,
            Err(message) => {
                err(Rule::InvalidAttribute, cell, message, Some(entity));
                continue;
            }
        };
        let candidate = field.clone().with(attr);
        if let Some(problem) = attribute_problems(&candidate).into_iter().next() {
            err(Rule::InvalidAttribute, cell, problem, Some(entity));
            continue;
        }
        field = candidate;
    }
    field
}
