//! Combined-query filters: a conjunction (`all`) and a disjunction (`any`) of
//! field predicates.
//!
//! A record matches when every `all` predicate holds and, if `any` is
//! nonempty, at least one `any` predicate holds. A null field value satisfies
//! only `ne`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{FieldType, SchemaDef, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
    In,
}

impl Op {
    pub const ALL: [Op; 8] = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge, Op::Contains, Op::In];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "eq",
            Op::Ne => "ne",
            Op::Lt => "lt",
            Op::Le => "le",
            Op::Gt => "gt",
            Op::Ge => "ge",
            Op::Contains => "contains",
            Op::In => "in",
        }
    }

    /// Whether the operator is defined for fields of type `ftype`.
    pub fn applies_to(self, ftype: FieldType) -> bool {
        match self {
            Op::Eq | Op::Ne | Op::In => true,
            Op::Lt | Op::Le | Op::Gt | Op::Ge => ftype.is_ordered(),
            Op::Contains => ftype == FieldType::String,
        }
    }
}

/// `(field, op, value)`. For `in` the value is a JSON array of literals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub field: String,
    pub op: Op,
    pub value: serde_json::Value,
}

impl Predicate {
    pub fn new(field: impl Into<String>, op: Op, value: impl Into<serde_json::Value>) -> Self {
        Predicate {
            field: field.into(),
            op,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterExpr {
    #[serde(default)]
    pub all: Vec<Predicate>,
    #[serde(default)]
    pub any: Vec<Predicate>,
}

impl FilterExpr {
    pub fn is_empty(&self) -> bool {
        self.all.is_empty() && self.any.is_empty()
    }

    /// Resolves field names and coerces literals against `schema`.
    pub fn compile(&self, schema: &SchemaDef) -> Result<CompiledFilter, Error> {
        let compile_all = |preds: &[Predicate]| -> Result<Vec<CompiledPredicate>, Error> {
            preds.iter().map(|p| compile_predicate(p, schema)).collect()
        };
        Ok(CompiledFilter {
            all: compile_all(&self.all)?,
            any: compile_all(&self.any)?,
        })
    }
}

#[derive(Debug, Clone)]
enum Literal {
    One(Value),
    Many(Vec<Value>),
}

#[derive(Debug, Clone)]
struct CompiledPredicate {
    index: usize,
    op: Op,
    literal: Literal,
}

/// A filter bound to one schema's field positions.
#[derive(Debug, Clone)]
pub struct CompiledFilter {
    all: Vec<CompiledPredicate>,
    any: Vec<CompiledPredicate>,
}

impl CompiledFilter {
    pub fn matches(&self, values: &[Option<Value>]) -> bool {
        self.all.iter().all(|p| p.holds(values))
            && (self.any.is_empty() || self.any.iter().any(|p| p.holds(values)))
    }
}

impl CompiledPredicate {
    fn holds(&self, values: &[Option<Value>]) -> bool {
        let Some(v) = values.get(self.index).and_then(Option::as_ref) else {
            return self.op == Op::Ne;
        };
        match (&self.literal, self.op) {
            (Literal::Many(set), Op::In) => set.iter().any(|l| v.compare(l) == Some(Ordering::Equal)),
            (Literal::One(Value::String(needle)), Op::Contains) => {
                matches!(v, Value::String(s) if s.contains(needle.as_str()))
            }
            (Literal::One(l), op) => {
                let ord = v.compare(l);
                match op {
                    Op::Eq => ord == Some(Ordering::Equal),
                    Op::Ne => ord != Some(Ordering::Equal),
                    Op::Lt => ord == Some(Ordering::Less),
                    Op::Le => matches!(ord, Some(Ordering::Less | Ordering::Equal)),
                    Op::Gt => ord == Some(Ordering::Greater),
                    Op::Ge => matches!(ord, Some(Ordering::Greater | Ordering::Equal)),
                    Op::Contains | Op::In => false,
                }
            }
            _ => false,
        }
    }
}

fn compile_predicate(p: &Predicate, schema: &SchemaDef) -> Result<CompiledPredicate, Error> {
    let index = schema
        .field_index(&p.field)
        .ok_or_else(|| Error::BadFilter(format!("unknown field {:?}", p.field)))?;
    let ftype = schema.fields[index].ftype;
    if !p.op.applies_to(ftype) {
        return Err(Error::BadFilter(format!(
            "operator {} is not defined for {} field {:?}",
            p.op.as_str(),
            ftype,
            p.field
        )));
    }
    let coerce = |json: &serde_json::Value| -> Result<Value, Error> {
        match Value::from_json(ftype, json) {
            Ok(Some(v)) => Ok(v),
            Ok(None) => Err(Error::BadFilter(format!("null literal for field {:?}", p.field))),
            Err(e) => Err(Error::BadFilter(format!("field {:?}: {e}", p.field))),
        }
    };
    let literal = if p.op == Op::In {
        let items = p
            .value
            .as_array()
            .ok_or_else(|| Error::BadFilter(format!("in on {:?} expects an array literal", p.field)))?;
        Literal::Many(items.iter().map(coerce).collect::<Result<_, _>>()?)
    } else {
        Literal::One(coerce(&p.value)?)
    };
    Ok(CompiledPredicate {
        index,
        op: p.op,
        literal,
    })
}
