//! Grammar of the system metadata table.
//!
//! Column 1 holds a marker from `T`, `G`, `U`, `S`, `FI`, `+`. Sections come in
//! the order T, G, U, then any number of schema blocks (`S` row, `FI` header,
//! `+` field rows). A `+` row continues the nearest section header above it:
//! horizontally for groups, one record per row for users and fields. A `+` row
//! with no content is a placeholder and is ignored.

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, ParseErrorKind, ParseErrors};
use crate::tabular::TabularDocument;

/// A trimmed cell value with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    pub row: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantRow {
    pub row: usize,
    pub id: Cell,
    pub password: Cell,
    pub system_name: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRow {
    pub row: usize,
    pub userid: Cell,
    pub username: Cell,
    pub password: Cell,
    /// `;`-separated group ids.
    pub groups: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRow {
    pub row: usize,
    pub ftype: Cell,
    pub fname: Cell,
    pub attributes: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaBlock {
    pub row: usize,
    pub schemaid: Cell,
    pub group: Cell,
    pub entry: Cell,
    pub gpermission: Cell,
    pub opermission: Cell,
    pub fields: Vec<FieldRow>,
}

/// Parsed, position-annotated requirements table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReTaDocument {
    pub origin: String,
    pub tenant: TenantRow,
    pub groups: Vec<Cell>,
    pub users: Vec<UserRow>,
    pub schemas: Vec<SchemaBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Tenant,
    Groups,
    Users,
    /// After an `S` row, before its `FI` header.
    SchemaHeader,
    Fields,
}

impl Section {
    fn marker(self) -> &'static str {
        match self {
            Section::Tenant => "T",
            Section::Groups => "G",
            Section::Users => "U",
            Section::SchemaHeader => "S",
            Section::Fields => "FI",
        }
    }
}

struct Line {
    number: usize,
    cells: Vec<String>,
}

impl Line {
    fn marker(&self) -> &str {
        &self.cells[0]
    }

    /// Data cells after the marker.
    fn data(&self) -> &[String] {
        &self.cells[1..]
    }

    fn cell(&self, data_index: usize) -> Cell {
        Cell {
            text: self.cells.get(data_index + 1).cloned().unwrap_or_default(),
            row: self.number,
            column: data_index + 2,
        }
    }
}

/// Parses a metadata table. Errors are collected across the document where
/// recovery is possible; any error means no document is returned.
pub fn parse_metadata_table(doc: &TabularDocument) -> Result<ReTaDocument, ParseErrors> {
    let lines: Vec<Line> = doc
        .rows
        .iter()
        .filter_map(|row| {
            let mut cells: Vec<String> = row.cells.iter().map(|c| c.trim().to_string()).collect();
            while cells.last().is_some_and(String::is_empty) {
                cells.pop();
            }
            (!cells.is_empty()).then_some(Line {
                number: row.number,
                cells,
            })
        })
        .collect();

    let Some(first) = lines.first() else {
        return Err(ParseErrors(vec![ParseError::new(1, 1, ParseErrorKind::EmptyDocument)]));
    };
    if first.marker() != "T" {
        return Err(ParseErrors(vec![ParseError::new(
            first.number,
            1,
            ParseErrorKind::MissingTenantRow,
        )]));
    }

    let mut errors = Vec::new();
    let arity = |line: &Line, section: &str, expected: &str, ok: bool, errors: &mut Vec<ParseError>| {
        if !ok {
            errors.push(ParseError::new(
                line.number,
                1,
                ParseErrorKind::WrongArity {
                    section: section.to_string(),
                    expected: expected.to_string(),
                    found: line.data().len(),
                },
            ));
        }
        ok
    };

    arity(first, "T", "at most 3", first.data().len() <= 3, &mut errors);
    let tenant = TenantRow {
        row: first.number,
        id: first.cell(0),
        password: first.cell(1),
        system_name: first.cell(2),
    };

    let mut groups = Vec::new();
    let mut users = Vec::new();
    let mut schemas: Vec<SchemaBlock> = Vec::new();
    let mut section = Section::Tenant;

    let out_of_order = |line: &Line, section: Section| {
        ParseError::new(
            line.number,
            1,
            ParseErrorKind::SectionOutOfOrder {
                marker: line.marker().to_string(),
                after: section.marker().to_string(),
            },
        )
    };

    for line in &lines[1..] {
        if section == Section::SchemaHeader && line.marker() != "FI" && !(line.marker() == "+" && line.data().is_empty()) {
            errors.push(ParseError::new(line.number, 1, ParseErrorKind::MissingFieldHeader));
            // recover as if the header had been present
            section = Section::Fields;
            if line.marker() == "+" {
                continue;
            }
        }
        match line.marker() {
            "T" => errors.push(ParseError::new(line.number, 1, ParseErrorKind::DuplicateTenantRow)),
            "G" => {
                if section != Section::Tenant {
                    errors.push(out_of_order(line, section));
                    continue;
                }
                section = Section::Groups;
                push_groups(line, &mut groups);
            }
            "U" => {
                if section > Section::Groups {
                    errors.push(out_of_order(line, section));
                    continue;
                }
                section = Section::Users;
            }
            "S" => {
                section = Section::SchemaHeader;
                arity(line, "S", "at most 5", line.data().len() <= 5, &mut errors);
                schemas.push(SchemaBlock {
                    row: line.number,
                    schemaid: line.cell(0),
                    group: line.cell(1),
                    entry: line.cell(2),
                    gpermission: line.cell(3),
                    opermission: line.cell(4),
                    fields: Vec::new(),
                });
            }
            "FI" => {
                if section != Section::SchemaHeader {
                    errors.push(out_of_order(line, section));
                    continue;
                }
                section = Section::Fields;
            }
            "+" if line.data().is_empty() => {}
            "+" => match section {
                Section::Groups => push_groups(line, &mut groups),
                Section::Users => {
                    let n = line.data().len();
                    if arity(line, "U", "3 or 4", (3..=4).contains(&n), &mut errors) {
                        users.push(UserRow {
                            row: line.number,
                            userid: line.cell(0),
                            username: line.cell(1),
                            password: line.cell(2),
                            groups: line.cell(3),
                        });
                    }
                }
                Section::Fields => {
                    if arity(line, "FI", "at least 2", line.data().len() >= 2, &mut errors) {
                        let block = schemas.last_mut().expect("fields follow a schema row");
                        block.fields.push(FieldRow {
                            row: line.number,
                            ftype: line.cell(0),
                            fname: line.cell(1),
                            attributes: (2..line.data().len())
                                .map(|i| line.cell(i))
                                .filter(|c| !c.text.is_empty())
                                .collect(),
                        });
                    }
                }
                Section::Tenant | Section::SchemaHeader => {
                    errors.push(ParseError::new(line.number, 1, ParseErrorKind::OrphanContinuation))
                }
            },
            other => errors.push(ParseError::new(
                line.number,
                1,
                ParseErrorKind::UnknownMarker {
                    marker: other.to_string(),
                },
            )),
        }
    }

    if section == Section::SchemaHeader {
        let row = schemas.last().map_or(1, |s| s.row);
        errors.push(ParseError::new(row, 1, ParseErrorKind::MissingFieldHeader));
    }

    if errors.is_empty() {
        Ok(ReTaDocument {
            origin: doc.origin.clone(),
            tenant,
            groups,
            users,
            schemas,
        })
    } else {
        Err(ParseErrors(errors))
    }
}

fn push_groups(line: &Line, groups: &mut Vec<Cell>) {
    groups.extend(
        (0..line.data().len())
            .map(|i| line.cell(i))
            .filter(|c| !c.text.is_empty()),
    );
}
