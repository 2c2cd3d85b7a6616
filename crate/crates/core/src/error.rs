use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::ValidationReport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid permission letter '{letter}'")]
pub struct InvalidPermissionLetter {
    pub letter: char,
    /// Character index within the permission text.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParseErrorKind {
    EmptyDocument,
    MissingTenantRow,
    DuplicateTenantRow,
    UnknownMarker { marker: String },
    /// A `+` row with no section header above it that accepts continuation rows.
    OrphanContinuation,
    SectionOutOfOrder { marker: String, after: String },
    WrongArity { section: String, expected: String, found: usize },
    /// An `S` row not immediately followed by an `FI` header.
    MissingFieldHeader,
}

/// A grammar violation in a requirements table, with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub row: usize,
    pub column: usize,
    #[serde(flatten)]
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    pub fn new(row: usize, column: usize, kind: ParseErrorKind) -> Self {
        let message = match &kind {
            ParseErrorKind::EmptyDocument => "document contains no rows".to_string(),
            ParseErrorKind::MissingTenantRow => "first row must be a T row".to_string(),
            ParseErrorKind::DuplicateTenantRow => "only one T row is allowed".to_string(),
            ParseErrorKind::UnknownMarker { marker } => format!("unknown marker {marker:?}"),
            ParseErrorKind::OrphanContinuation => "\"+\" row does not follow an extensible section".to_string(),
            ParseErrorKind::SectionOutOfOrder { marker, after } => {
                format!("{marker} section may not appear after {after}")
            }
            ParseErrorKind::WrongArity { section, expected, found } => {
                format!("{section} row expects {expected} cells, found {found}")
            }
            ParseErrorKind::MissingFieldHeader => "schema block missing FI header".to_string(),
        };
        ParseError {
            row,
            column,
            kind,
            message,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.row, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{}", display_list(.0))]
pub struct ParseErrors(pub Vec<ParseError>);

fn display_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A field-level reason a record was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowIssueKind {
    Coercion,
    NullViolation,
    UniqueViolation,
    Arity,
}

/// A rejected data-exchange row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub row: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub kind: RowIssueKind,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "{}:{}: {}", self.row, c, self.message),
            None => write!(f, "{}: {}", self.row, self.message),
        }
    }
}

/// Domain errors raised by the engine and the store.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseErrors),
    #[error("validation failed:\n{0}")]
    Invalid(ValidationReport),
    #[error("tenant {0:?} already exists")]
    DuplicateTenant(String),
    #[error("authentication failed")]
    AuthFailure,
    #[error("unknown tenant {0:?}")]
    UnknownTenant(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error("unknown record {id} in schema {schema:?}")]
    UnknownRecord { schema: String, id: String },
    #[error("record rejected: {}", display_list(.0))]
    Validation(Vec<FieldIssue>),
    #[error("duplicate value {value:?} for unique field {field:?}")]
    UniqueViolation { field: String, value: String },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("import rejected: {}", display_list(.0))]
    ImportRejected(Vec<RowIssue>),
    #[error("record does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("bad filter: {0}")]
    BadFilter(String),
    #[error("bad aggregation: {0}")]
    BadAggregation(String),
    #[error("unreadable spreadsheet: {0}")]
    Tabular(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
