use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Rule identifiers attached to diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// User memberships must name declared groups.
    #[serde(rename = "CR1")]
    Cr1,
    /// Schema owner group and entry user must be declared.
    #[serde(rename = "CR2")]
    Cr2,
    /// Schemas have at least one uniquely named field; records match their schema.
    #[serde(rename = "CR3")]
    Cr3,
    #[serde(rename = "duplicate-id")]
    DuplicateId,
    #[serde(rename = "invalid-permission")]
    InvalidPermission,
    #[serde(rename = "unknown-ftype")]
    UnknownFieldType,
    #[serde(rename = "invalid-attribute")]
    InvalidAttribute,
    #[serde(rename = "empty-cell")]
    EmptyCell,
    #[serde(rename = "invalid-identifier")]
    InvalidIdentifier,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::Cr1 => "CR1",
            Rule::Cr2 => "CR2",
            Rule::Cr3 => "CR3",
            Rule::DuplicateId => "duplicate-id",
            Rule::InvalidPermission => "invalid-permission",
            Rule::UnknownFieldType => "unknown-ftype",
            Rule::InvalidAttribute => "invalid-attribute",
            Rule::EmptyCell => "empty-cell",
            Rule::InvalidIdentifier => "invalid-identifier",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub rule: Rule,
    pub message: String,
    /// Id of the offending group/user/schema/field/record, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    /// 1-based source position, present for diagnostics raised on a table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Diagnostic {
    pub fn error(rule: Rule, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            rule,
            message: message.into(),
            entity: None,
            row: None,
            column: None,
        }
    }

    pub fn entity(mut self, id: impl Into<String>) -> Self {
        self.entity = Some(id.into());
        self
    }

    pub fn at(mut self, row: usize, column: usize) -> Self {
        self.row = Some(row);
        self.column = Some(column);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(r), Some(c)) = (self.row, self.column) {
            write!(f, "{r}:{c}: ")?;
        }
        write!(f, "[{}] {}", self.rule, self.message)
    }
}

/// Result of validating a table or an instance. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn push(&mut self, d: Diagnostic) {
        self.diagnostics.push(d);
    }

    pub fn len(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.diagnostics.iter()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}
