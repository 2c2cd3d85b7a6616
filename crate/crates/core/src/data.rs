//! Record operations on a single system: CRUD, combined query, statistics and
//! batch import. These are pure in-memory operations; [`crate::store::Store`]
//! adds locking and durability on top.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldIssue, Result, RowIssue, RowIssueKind};
use crate::filter::FilterExpr;
use crate::model::{Collection, DataRecord, FieldType, RecordId, SchemaDef, SystemInstance, Value};

/// Field values keyed by field name; `None` is an explicit null.
pub type FieldValues = BTreeMap<String, Option<Value>>;

/// Coerces a JSON object into [`FieldValues`] for `schema`.
pub fn values_from_json(schema: &SchemaDef, object: &serde_json::Map<String, serde_json::Value>) -> Result<FieldValues> {
    let mut out = FieldValues::new();
    let mut issues = Vec::new();
    for (name, json) in object {
        let Some(field) = schema.field(name) else {
            issues.push(FieldIssue {
                field: name.clone(),
                message: "unknown field".into(),
            });
            continue;
        };
        match Value::from_json(field.ftype, json) {
            Ok(v) => {
                out.insert(name.clone(), v);
            }
            Err(_) => issues.push(FieldIssue {
                field: name.clone(),
                message: format!("not {}", article(field.ftype)),
            }),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(issues))
    }
}

fn article(t: FieldType) -> &'static str {
    match t {
        FieldType::String => "a string",
        FieldType::Int => "an int",
        FieldType::Float => "a float",
        FieldType::Bool => "a bool",
        FieldType::Date => "a date",
    }
}

/// Type and nullability problems of a full value vector.
pub(crate) fn check_values(schema: &SchemaDef, values: &[Option<Value>]) -> Vec<FieldIssue> {
    let mut issues = Vec::new();
    for (field, value) in schema.fields.iter().zip(values) {
        match value {
            None if !field.nullable() => issues.push(FieldIssue {
                field: field.fname.clone(),
                message: "null not allowed".into(),
            }),
            Some(Value::String(s)) if s.is_empty() && field.ftype == FieldType::String => {
                issues.push(FieldIssue {
                    field: field.fname.clone(),
                    message: "empty string is stored as null".into(),
                })
            }
            Some(Value::Float(f)) if !f.is_finite() => issues.push(FieldIssue {
                field: field.fname.clone(),
                message: "float must be finite".into(),
            }),
            Some(v) if v.field_type() != field.ftype => issues.push(FieldIssue {
                field: field.fname.clone(),
                message: format!("not {}", article(field.ftype)),
            }),
            _ => {}
        }
    }
    issues
}

/// Identity used for unique-field checks.
pub(crate) fn unique_key(v: &Value) -> String {
    match v {
        Value::Float(f) if *f == 0.0 => "0.0".into(),
        other => other.render(),
    }
}

/// Normalizes one incoming value to the field's type: empty strings become
/// null and ints widen to floats.
fn normalize(ftype: FieldType, value: Option<Value>) -> Option<Value> {
    match (ftype, value) {
        (_, Some(Value::String(s))) if s.is_empty() => None,
        (FieldType::Float, Some(Value::Int(i))) => Some(Value::Float(i as f64)),
        (_, v) => v,
    }
}

/// Builds a complete value vector from `input`, filling missing fields with
/// their default (or null).
fn build_values(schema: &SchemaDef, input: &FieldValues) -> Result<Vec<Option<Value>>> {
    let unknown: Vec<FieldIssue> = input
        .keys()
        .filter(|k| schema.field(k).is_none())
        .map(|k| FieldIssue {
            field: k.clone(),
            message: "unknown field".into(),
        })
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(unknown));
    }
    let values: Vec<Option<Value>> = schema
        .fields
        .iter()
        .map(|f| match input.get(&f.fname) {
            Some(v) => normalize(f.ftype, v.clone()),
            None => f.default_value().cloned(),
        })
        .collect();
    let issues = check_values(schema, &values);
    if issues.is_empty() {
        Ok(values)
    } else {
        Err(Error::Validation(issues))
    }
}

/// Fails with `UniqueViolation` if `values` repeats a unique-field value held
/// by any record other than `skip`.
fn check_unique(schema: &SchemaDef, collection: &Collection, values: &[Option<Value>], skip: Option<RecordId>) -> Result<()> {
    for (i, field) in schema.fields.iter().enumerate() {
        let (true, Some(v)) = (field.unique(), &values[i]) else {
            continue;
        };
        let key = unique_key(v);
        let clash = collection
            .records
            .values()
            .filter(|r| Some(r.id) != skip)
            .any(|r| r.values[i].as_ref().map(unique_key).as_deref() == Some(key.as_str()));
        if clash {
            return Err(Error::UniqueViolation {
                field: field.fname.clone(),
                value: v.render(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub field: String,
    #[serde(default)]
    pub descending: bool,
}

impl Order {
    /// Parses `field`, `field:asc` or `field:desc`.
    pub fn parse(text: &str) -> Option<Order> {
        let (field, dir) = match text.split_once(':') {
            Some((f, d)) => (f, d),
            None => (text, "asc"),
        };
        let descending = match dir {
            "asc" => false,
            "desc" => true,
            _ => return None,
        };
        (!field.is_empty()).then(|| Order {
            field: field.to_string(),
            descending,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Query {
    #[serde(default)]
    pub filter: FilterExpr,
    #[serde(default)]
    pub page: Page,
    #[serde(default)]
    pub order: Option<Order>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub records: Vec<DataRecord>,
    /// Match count before paging.
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [Self::Count, Self::Sum, Self::Avg, Self::Min, Self::Max];

    pub fn parse(text: &str) -> Option<Aggregate> {
        match text {
            "count" => Some(Self::Count),
            "sum" => Some(Self::Sum),
            "avg" => Some(Self::Avg),
            "min" => Some(Self::Min),
            "max" => Some(Self::Max),
            _ => None,
        }
    }

    pub fn applies_to(self, ftype: FieldType) -> bool {
        match self {
            Self::Count => true,
            Self::Sum | Self::Avg => ftype.is_numeric(),
            Self::Min | Self::Max => ftype.is_ordered(),
        }
    }
}

/// Scalar statistics result. `Empty` is returned by avg/min/max over no values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatValue {
    Int(i64),
    Float(f64),
    Date(NaiveDate),
    Empty,
}

impl StatValue {
    pub fn to_json(self) -> serde_json::Value {
        match self {
            StatValue::Int(i) => i.into(),
            StatValue::Float(f) => serde_json::Number::from_f64(f).map_or(serde_json::Value::Null, Into::into),
            StatValue::Date(d) => d.format("%Y-%m-%d").to_string().into(),
            StatValue::Empty => serde_json::Value::Null,
        }
    }
}

/// One data row of an import batch with its source row number.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportRow {
    pub row: usize,
    pub values: Vec<Option<Value>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportOutcome {
    pub inserted: usize,
    pub ids: Vec<RecordId>,
    pub rejected: Vec<RowIssue>,
}

impl SystemInstance {
    pub fn schema_or_err(&self, schemaid: &str) -> Result<&SchemaDef> {
        self.schema(schemaid)
            .ok_or_else(|| Error::UnknownSchema(schemaid.to_string()))
    }

    fn parts_mut(&mut self, schemaid: &str) -> Result<(&SchemaDef, &mut Collection)> {
        let schema = self
            .schemas
            .iter()
            .find(|s| s.schemaid == schemaid)
            .ok_or_else(|| Error::UnknownSchema(schemaid.to_string()))?;
        let collection = self.data.entry(schemaid.to_string()).or_default();
        Ok((schema, collection))
    }

    pub fn collection(&self, schemaid: &str) -> Result<(&SchemaDef, Option<&Collection>)> {
        let schema = self.schema_or_err(schemaid)?;
        Ok((schema, self.data.get(schemaid)))
    }

    pub fn insert_record(&mut self, schemaid: &str, input: &FieldValues) -> Result<RecordId> {
        let (schema, collection) = self.parts_mut(schemaid)?;
        let values = build_values(schema, input)?;
        check_unique(schema, collection, &values, None)?;
        let id = RecordId(collection.next_id);
        collection.next_id += 1;
        collection.records.insert(id, DataRecord { id, values });
        Ok(id)
    }

    pub fn get_record(&self, schemaid: &str, id: RecordId) -> Result<&DataRecord> {
        let (_, collection) = self.collection(schemaid)?;
        collection
            .and_then(|c| c.records.get(&id))
            .ok_or_else(|| unknown_record(schemaid, id))
    }

    /// Merges `partial` into the stored record and revalidates the result.
    pub fn update_record(&mut self, schemaid: &str, id: RecordId, partial: &FieldValues) -> Result<DataRecord> {
        let (schema, collection) = self.parts_mut(schemaid)?;
        let current = collection
            .records
            .get(&id)
            .ok_or_else(|| unknown_record(schemaid, id))?;
        let mut merged: FieldValues = schema
            .fields
            .iter()
            .zip(&current.values)
            .map(|(f, v)| (f.fname.clone(), v.clone()))
            .collect();
        for (k, v) in partial {
            merged.insert(k.clone(), v.clone());
        }
        let values = build_values(schema, &merged)?;
        check_unique(schema, collection, &values, Some(id))?;
        let record = DataRecord { id, values };
        collection.records.insert(id, record.clone());
        Ok(record)
    }

    pub fn delete_record(&mut self, schemaid: &str, id: RecordId) -> Result<()> {
        let (_, collection) = self.parts_mut(schemaid)?;
        collection
            .records
            .remove(&id)
            .map(|_| ())
            .ok_or_else(|| unknown_record(schemaid, id))
    }

    pub fn query(&self, schemaid: &str, query: &Query) -> Result<QueryResult> {
        let (schema, collection) = self.collection(schemaid)?;
        let filter = query.filter.compile(schema)?;
        let order_index = match &query.order {
            Some(o) => Some((
                schema
                    .field_index(&o.field)
                    .ok_or_else(|| Error::BadFilter(format!("unknown sort field {:?}", o.field)))?,
                o.descending,
            )),
            None => None,
        };
        let mut matched: Vec<&DataRecord> = collection
            .into_iter()
            .flat_map(|c| c.records.values())
            .filter(|r| filter.matches(&r.values))
            .collect();
        if let Some((index, descending)) = order_index {
            matched.sort_by(|a, b| {
                let by_value = match (&a.values[index], &b.values[index]) {
                    (Some(x), Some(y)) => {
                        let ord = x.compare(y).unwrap_or(Ordering::Equal);
                        if descending {
                            ord.reverse()
                        } else {
                            ord
                        }
                    }
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                };
                by_value.then(a.id.cmp(&b.id))
            });
        }
        let total = matched.len();
        let records = matched
            .into_iter()
            .skip(query.page.offset)
            .take(query.page.limit.unwrap_or(usize::MAX))
            .cloned()
            .collect();
        Ok(QueryResult { records, total })
    }

    /// Aggregates `fname` over the records matching `filter`. Null values are
    /// skipped except by `count`, which counts matching records.
    pub fn statistics(&self, schemaid: &str, fname: &str, agg: Aggregate, filter: &FilterExpr) -> Result<StatValue> {
        let (schema, collection) = self.collection(schemaid)?;
        let index = schema
            .field_index(fname)
            .ok_or_else(|| Error::BadAggregation(format!("unknown field {fname:?}")))?;
        let ftype = schema.fields[index].ftype;
        if !agg.applies_to(ftype) {
            return Err(Error::BadAggregation(format!(
                "{agg:?} is not defined for {ftype} field {fname:?}"
            )));
        }
        let filter = filter.compile(schema)?;
        let matched = collection
            .into_iter()
            .flat_map(|c| c.records.values())
            .filter(|r| filter.matches(&r.values));
        if agg == Aggregate::Count {
            return Ok(StatValue::Int(matched.count() as i64));
        }
        let values: Vec<&Value> = matched.filter_map(|r| r.values[index].as_ref()).collect();
        let stat = match agg {
            Aggregate::Count => unreachable!(),
            Aggregate::Sum | Aggregate::Avg => {
                let n = values.len();
                let sum = match ftype {
                    FieldType::Int => {
                        let total: i128 = values
                            .iter()
                            .map(|v| match v {
                                Value::Int(i) => *i as i128,
                                _ => 0,
                            })
                            .sum();
                        NumericSum::Int(total)
                    }
                    _ => NumericSum::Float(values.iter().fold(0.0, |acc, v| match v {
                        Value::Float(f) => acc + f,
                        _ => acc,
                    })),
                };
                match (agg, sum) {
                    (Aggregate::Avg, _) if n == 0 => StatValue::Empty,
                    (Aggregate::Avg, NumericSum::Int(t)) => StatValue::Float(t as f64 / n as f64),
                    (Aggregate::Avg, NumericSum::Float(t)) => StatValue::Float(t / n as f64),
                    (_, NumericSum::Int(t)) => StatValue::Int(
                        i64::try_from(t).map_err(|_| Error::BadAggregation("integer sum overflows".into()))?,
                    ),
                    (_, NumericSum::Float(t)) => StatValue::Float(t),
                }
            }
            Aggregate::Min | Aggregate::Max => {
                let pick = values.into_iter().reduce(|best, v| {
                    let ord = v.compare(best).unwrap_or(Ordering::Equal);
                    let better = if agg == Aggregate::Min {
                        ord == Ordering::Less
                    } else {
                        ord == Ordering::Greater
                    };
                    if better {
                        v
                    } else {
                        best
                    }
                });
                match pick {
                    None => StatValue::Empty,
                    Some(Value::Int(i)) => StatValue::Int(*i),
                    Some(Value::Float(f)) => StatValue::Float(*f),
                    Some(Value::Date(d)) => StatValue::Date(*d),
                    Some(_) => return Err(Error::BadAggregation("unordered value".into())),
                }
            }
        };
        Ok(stat)
    }

    /// Inserts a batch of parsed rows. With `atomic`, any rejected row
    /// rejects the whole batch and nothing is inserted.
    pub fn import_rows(&mut self, schemaid: &str, rows: Vec<ImportRow>, atomic: bool) -> Result<ImportOutcome> {
        let (schema, collection) = self.parts_mut(schemaid)?;
        let mut rejected = Vec::new();
        let mut accepted = Vec::new();
        let mut batch_keys: Vec<HashSet<String>> = vec![HashSet::new(); schema.fields.len()];
        for row in rows {
            let issues = check_values(schema, &row.values);
            if let Some(issue) = issues.first() {
                rejected.push(RowIssue {
                    row: row.row,
                    column: schema.field_index(&issue.field).map(|i| i + 1),
                    field: Some(issue.field.clone()),
                    kind: if issue.message.contains("null") {
                        RowIssueKind::NullViolation
                    } else {
                        RowIssueKind::Coercion
                    },
                    message: issue.to_string(),
                });
                continue;
            }
            let mut clash = None;
            for (i, field) in schema.fields.iter().enumerate() {
                let (true, Some(v)) = (field.unique(), &row.values[i]) else {
                    continue;
                };
                let key = unique_key(v);
                let existing = collection
                    .records
                    .values()
                    .any(|r| r.values[i].as_ref().map(unique_key).as_deref() == Some(key.as_str()));
                if existing || batch_keys[i].contains(&key) {
                    clash = Some((i, v.render()));
                    break;
                }
            }
            if let Some((i, value)) = clash {
                rejected.push(RowIssue {
                    row: row.row,
                    column: Some(i + 1),
                    field: Some(schema.fields[i].fname.clone()),
                    kind: RowIssueKind::UniqueViolation,
                    message: format!("duplicate value {value:?} for unique field {:?}", schema.fields[i].fname),
                });
                continue;
            }
            for (i, field) in schema.fields.iter().enumerate() {
                if let (true, Some(v)) = (field.unique(), &row.values[i]) {
                    batch_keys[i].insert(unique_key(v));
                }
            }
            accepted.push(row.values);
        }
        if atomic && !rejected.is_empty() {
            return Err(Error::ImportRejected(rejected));
        }
        let mut ids = Vec::with_capacity(accepted.len());
        for values in accepted {
            let id = RecordId(collection.next_id);
            collection.next_id += 1;
            collection.records.insert(id, DataRecord { id, values });
            ids.push(id);
        }
        Ok(ImportOutcome {
            inserted: ids.len(),
            ids,
            rejected,
        })
    }
}

enum NumericSum {
    Int(i128),
    Float(f64),
}

fn unknown_record(schemaid: &str, id: RecordId) -> Error {
    Error::UnknownRecord {
        schema: schemaid.to_string(),
        id: id.to_string(),
    }
}
