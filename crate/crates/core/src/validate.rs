//! Structural validation of a materialized [`SystemInstance`].

use std::collections::{BTreeMap, BTreeSet};

use crate::data::{check_values, unique_key};
use crate::model::{is_valid_identifier, FieldDef, OtherAttribute, SchemaDef, SystemInstance};
use crate::report::{Diagnostic, Rule, ValidationReport};

/// Checks every instance invariant and constraint-rule family. Returns one
/// diagnostic per violation; the multiset of diagnostics does not depend on
/// the order of groups, users or schemas.
pub fn validate_instance(s: &SystemInstance) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !is_valid_identifier(&s.tenant.id) {
        report.push(
            Diagnostic::error(Rule::InvalidIdentifier, format!("invalid tenant id {:?}", s.tenant.id))
                .entity(&s.tenant.id),
        );
    }

    for id in duplicates(s.groups.iter().map(|g| g.groupid.as_str())) {
        report.push(Diagnostic::error(Rule::DuplicateId, format!("duplicate groupid {id:?}")).entity(id));
    }
    for g in &s.groups {
        if !is_valid_group_id(&g.groupid) {
            report.push(
                Diagnostic::error(Rule::InvalidIdentifier, format!("invalid groupid {:?}", g.groupid))
                    .entity(&g.groupid),
            );
        }
    }

    for id in duplicates(s.users.iter().map(|u| u.userid.as_str())) {
        report.push(Diagnostic::error(Rule::DuplicateId, format!("duplicate userid {id:?}")).entity(id));
    }
    for u in &s.users {
        if !is_valid_identifier(&u.userid) {
            report.push(
                Diagnostic::error(Rule::InvalidIdentifier, format!("invalid userid {:?}", u.userid))
                    .entity(&u.userid),
            );
        }
        let unknown: BTreeSet<&str> = u
            .memberships
            .iter()
            .map(String::as_str)
            .filter(|g| !s.has_group(g))
            .collect();
        for g in unknown {
            report.push(
                Diagnostic::error(Rule::Cr1, format!("user {:?}: unknown groupid {g:?}", u.userid))
                    .entity(&u.userid),
            );
        }
    }

    let repeated_schemas = duplicates(s.schemas.iter().map(|x| x.schemaid.as_str()));
    for id in &repeated_schemas {
        report.push(Diagnostic::error(Rule::DuplicateId, format!("duplicate schemaid {id:?}")).entity(*id));
    }
    for schema in &s.schemas {
        check_schema(s, schema, &mut report);
    }

    for (schemaid, collection) in &s.data {
        let Some(schema) = s.schema(schemaid) else {
            report.push(
                Diagnostic::error(Rule::Cr3, format!("records stored under undeclared schema {schemaid:?}"))
                    .entity(schemaid),
            );
            continue;
        };
        if repeated_schemas.contains(schemaid.as_str()) {
            // which declaration the records belong to is ambiguous
            continue;
        }
        let mut seen: BTreeMap<(usize, String), usize> = BTreeMap::new();
        for (key, record) in &collection.records {
            let rid = format!("{schemaid}/{key}");
            if record.id != *key || key.0 >= collection.next_id {
                report.push(Diagnostic::error(Rule::Cr3, format!("record {rid}: inconsistent record id")).entity(&rid));
            }
            if record.values.len() != schema.fields.len() {
                report.push(
                    Diagnostic::error(
                        Rule::Cr3,
                        format!(
                            "record {rid}: {} values for {} fields",
                            record.values.len(),
                            schema.fields.len()
                        ),
                    )
                    .entity(&rid),
                );
                continue;
            }
            for issue in check_values(schema, &record.values) {
                report.push(Diagnostic::error(Rule::Cr3, format!("record {rid}: {issue}")).entity(&rid));
            }
            for (i, f) in schema.fields.iter().enumerate() {
                if let (true, Some(v)) = (f.unique(), &record.values[i]) {
                    *seen.entry((i, unique_key(v))).or_default() += 1;
                }
            }
        }
        for ((i, value), count) in seen {
            if count > 1 {
                let fname = &schema.fields[i].fname;
                report.push(
                    Diagnostic::error(
                        Rule::Cr3,
                        format!("schema {schemaid:?}: value {value:?} repeated in unique field {fname:?}"),
                    )
                    .entity(format!("{schemaid}.{fname}")),
                );
            }
        }
    }

    report.diagnostics.sort();
    report
}

fn check_schema(s: &SystemInstance, schema: &SchemaDef, report: &mut ValidationReport) {
    let id = &schema.schemaid;
    if !is_valid_identifier(id) {
        report.push(Diagnostic::error(Rule::InvalidIdentifier, format!("invalid schemaid {id:?}")).entity(id));
    }
    if !s.has_group(&schema.group) {
        report.push(
            Diagnostic::error(Rule::Cr2, format!("schema {id:?}: unknown groupid {:?}", schema.group)).entity(id),
        );
    }
    if s.user(&schema.entry).is_none() {
        report.push(
            Diagnostic::error(Rule::Cr2, format!("schema {id:?}: unknown entry user {:?}", schema.entry)).entity(id),
        );
    }
    if schema.fields.is_empty() {
        report.push(Diagnostic::error(Rule::Cr3, format!("schema {id:?} declares no fields")).entity(id));
    }
    for fname in duplicates(schema.field_names()) {
        report.push(
            Diagnostic::error(Rule::DuplicateId, format!("schema {id:?}: duplicate field {fname:?}"))
                .entity(format!("{id}.{fname}")),
        );
    }
    for f in &schema.fields {
        if !is_valid_identifier(&f.fname) {
            report.push(
                Diagnostic::error(Rule::InvalidIdentifier, format!("schema {id:?}: invalid field name {:?}", f.fname))
                    .entity(format!("{id}.{}", f.fname)),
            );
        }
        for problem in attribute_problems(f) {
            report.push(
                Diagnostic::error(Rule::InvalidAttribute, format!("field {:?}: {problem}", f.fname))
                    .entity(format!("{id}.{}", f.fname)),
            );
        }
    }
}

/// Attribute-set invariants of a field definition.
pub(crate) fn attribute_problems(f: &FieldDef) -> Vec<String> {
    let mut out = Vec::new();
    let count = |pred: fn(&OtherAttribute) -> bool| f.attributes.iter().filter(|a| pred(a)).count();
    let nullability = count(|a| matches!(a, OtherAttribute::Nullable | OtherAttribute::NotNull));
    if nullability > 1 {
        out.push("more than one nullability token".to_string());
    }
    if count(|a| matches!(a, OtherAttribute::Unique)) > 1 {
        out.push("repeated unique token".to_string());
    }
    if count(|a| matches!(a, OtherAttribute::Default(_))) > 1 {
        out.push("more than one default token".to_string());
    }
    if let Some(v) = f.default_value() {
        if v.field_type() != f.ftype {
            out.push(format!("default {:?} is not a {} value", v.render(), f.ftype));
        }
    }
    out
}

pub(crate) fn is_valid_group_id(id: &str) -> bool {
    is_valid_identifier(id) && !id.contains(';')
}

/// Ids that occur more than once, each reported once.
fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dups.insert(id);
        }
    }
    dups
}
