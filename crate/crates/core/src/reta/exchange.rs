//! Data exchange tables: a header row naming a schema's fields in declaration
//! order, then one record per row.

use crate::data::ImportRow;
use crate::error::{Error, Result, RowIssue, RowIssueKind};
use crate::model::{DataRecord, FieldType, SchemaDef};
use crate::tabular::TabularDocument;

/// Rows that coerced cleanly, plus the per-row problems of the rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExchangeRows {
    pub rows: Vec<ImportRow>,
    pub rejected: Vec<RowIssue>,
}

/// Parses a data exchange table against `schema`.
///
/// Cells are coerced by field type; string cells are taken verbatim, other
/// cells are trimmed first. An empty cell is null. With `atomic`, any bad row
/// fails the whole table with [`Error::ImportRejected`].
pub fn parse_data_exchange_table(doc: &TabularDocument, schema: &SchemaDef, atomic: bool) -> Result<ExchangeRows> {
    let expected: Vec<String> = schema.field_names().map(str::to_string).collect();
    let Some(header) = doc.rows.first() else {
        return Err(Error::HeaderMismatch {
            expected,
            found: Vec::new(),
        });
    };
    let found: Vec<String> = header.cells.iter().map(|c| c.trim().to_string()).collect();
    if found != expected {
        return Err(Error::HeaderMismatch { expected, found });
    }

    let mut out = ExchangeRows::default();
    for row in &doc.rows[1..] {
        if row.cells.len() > schema.fields.len() {
            out.rejected.push(RowIssue {
                row: row.number,
                column: Some(schema.fields.len() + 1),
                field: None,
                kind: RowIssueKind::Arity,
                message: format!("{} cells for {} fields", row.cells.len(), schema.fields.len()),
            });
            continue;
        }
        let mut values = Vec::with_capacity(schema.fields.len());
        let mut issues = Vec::new();
        for (i, field) in schema.fields.iter().enumerate() {
            let raw = row.cell(i);
            let text = if field.ftype == FieldType::String { raw } else { raw.trim() };
            if text.is_empty() {
                if !field.nullable() {
                    issues.push(RowIssue {
                        row: row.number,
                        column: Some(i + 1),
                        field: Some(field.fname.clone()),
                        kind: RowIssueKind::NullViolation,
                        message: format!("{}: null not allowed", field.fname),
                    });
                }
                values.push(None);
                continue;
            }
            match field.ftype.parse_literal(text) {
                Ok(v) => values.push(Some(v)),
                Err(e) => {
                    issues.push(RowIssue {
                        row: row.number,
                        column: Some(i + 1),
                        field: Some(field.fname.clone()),
                        kind: RowIssueKind::Coercion,
                        message: format!("{}: {e}", field.fname),
                    });
                    values.push(None);
                }
            }
        }
        if issues.is_empty() {
            out.rows.push(ImportRow {
                row: row.number,
                values,
            });
        } else {
            out.rejected.extend(issues);
        }
    }
    if atomic && !out.rejected.is_empty() {
        return Err(Error::ImportRejected(out.rejected));
    }
    Ok(out)
}

/// Renders records as a data exchange table that parses back to the same values.
pub fn serialize_data_exchange_table(records: &[DataRecord], schema: &SchemaDef, origin: &str) -> Result<TabularDocument> {
    let mut doc = TabularDocument::new(origin);
    doc.push_row(schema.field_names());
    for record in records {
        if record.values.len() != schema.fields.len() {
            return Err(Error::SchemaMismatch(format!(
                "record {} has {} values for {} fields",
                record.id,
                record.values.len(),
                schema.fields.len()
            )));
        }
        let mut cells = Vec::with_capacity(record.values.len());
        for (field, value) in schema.fields.iter().zip(&record.values) {
            match value {
                None => cells.push(String::new()),
                Some(v) if v.field_type() == field.ftype => cells.push(v.render()),
                Some(v) => {
                    return Err(Error::SchemaMismatch(format!(
                        "record {}: {} value in {} field {:?}",
                        record.id,
                        v.field_type(),
                        field.ftype,
                        field.fname
                    )))
                }
            }
        }
        doc.push_full_row(cells);
    }
    Ok(doc)
}
