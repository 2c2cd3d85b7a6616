//! Spreadsheet input/output. CSV (UTF-8, RFC 4180 quoting) and the first
//! worksheet of an XLSX workbook both normalize to a [`TabularDocument`].

use std::io::Cursor;

use calamine::{Data, Reader, Xlsx};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Value;

/// One spreadsheet row with its 1-based source row number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub number: usize,
    pub cells: Vec<String>,
}

impl Row {
    pub fn new(number: usize, mut cells: Vec<String>) -> Self {
        while cells.last().is_some_and(String::is_empty) {
            cells.pop();
        }
        Row { number, cells }
    }

    pub fn cell(&self, index: usize) -> &str {
        self.cells.get(index).map_or("", String::as_str)
    }
}

/// Rows of cells as read from a spreadsheet; trailing empty cells are trimmed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularDocument {
    /// File name, plus `#sheet` for workbooks.
    pub origin: String,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Xlsx,
}

impl Format {
    /// XLSX files are ZIP archives; everything else is read as CSV.
    pub fn sniff(bytes: &[u8]) -> Format {
        if bytes.starts_with(b"PK\x03\x04") {
            Format::Xlsx
        } else {
            Format::Csv
        }
    }
}

impl TabularDocument {
    pub fn new(origin: impl Into<String>) -> Self {
        TabularDocument {
            origin: origin.into(),
            rows: Vec::new(),
        }
    }

    /// Appends a row numbered after the last one.
    pub fn push_row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        let number = self.rows.last().map_or(1, |r| r.number + 1);
        self.rows.push(Row::new(number, cells.into_iter().map(Into::into).collect()));
    }

    /// Like [`push_row`](Self::push_row) but keeps trailing empty cells, so
    /// written rows have a fixed width.
    pub fn push_full_row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        let number = self.rows.last().map_or(1, |r| r.number + 1);
        self.rows.push(Row {
            number,
            cells: cells.into_iter().map(Into::into).collect(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        match Format::sniff(bytes) {
            Format::Csv => Self::from_csv(bytes, origin),
            Format::Xlsx => Self::from_xlsx(bytes, origin),
        }
    }

    /// Blank lines are skipped; row numbers refer to source lines.
    pub fn from_csv(bytes: &[u8], origin: &str) -> Result<Self> {
        let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes);
        let mut doc = TabularDocument::new(origin);
        // the reader's own line counter skips blank lines, so count newlines
        let (mut line, mut scanned) = (1, 0);
        for record in reader.records() {
            let record = record.map_err(|e| Error::Tabular(format!("{origin}: {e}")))?;
            let mut start = record.position().map_or(scanned, |p| p.byte() as usize);
            // positions point at any blank lines preceding the record
            while matches!(bytes.get(start), Some(b'\r' | b'\n')) {
                start += 1;
            }
            line += bytes[scanned..start].iter().filter(|&&b| b == b'\n').count();
            scanned = start;
            doc.rows.push(Row::new(line, record.iter().map(str::to_string).collect()));
        }
        Ok(doc)
    }

    /// Reads the first worksheet. Entirely empty rows are dropped.
    pub fn from_xlsx(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut workbook =
            Xlsx::new(Cursor::new(bytes)).map_err(|e| Error::Tabular(format!("{origin}: {e}")))?;
        let sheet = workbook
            .sheet_names()
            .first()
            .cloned()
            .ok_or_else(|| Error::Tabular(format!("{origin}: workbook has no worksheets")))?;
        let range = workbook
            .worksheet_range(&sheet)
            .map_err(|e| Error::Tabular(format!("{origin}: {e}")))?;
        let first_row = range.start().map_or(0, |(r, _)| r as usize);
        let first_col = range.start().map_or(0, |(_, c)| c as usize);
        let mut doc = TabularDocument::new(format!("{origin}#{sheet}"));
        for (i, cells) in range.rows().enumerate() {
            let mut row: Vec<String> = vec![String::new(); first_col];
            row.extend(cells.iter().map(xlsx_cell_text));
            let row = Row::new(first_row + i + 1, row);
            if !row.cells.is_empty() {
                doc.rows.push(row);
            }
        }
        Ok(doc)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        for row in &self.rows {
            // a row with no cells still has to produce a line
            let cells: &[String] = if row.cells.is_empty() { &[String::new()] } else { &row.cells };
            writer.write_record(cells).expect("writing to memory cannot fail");
        }
        writer.into_inner().expect("writing to memory cannot fail")
    }
}

fn xlsx_cell_text(cell: &Data) -> String {
    match cell {
        Data::Empty => String::new(),
        Data::String(s) => s.clone(),
        Data::Int(i) => i.to_string(),
        Data::Float(f) if f.fract() == 0.0 && f.abs() < 1e15 => format!("{}", *f as i64),
        Data::Float(f) => Value::Float(*f).render(),
        Data::Bool(b) => b.to_string(),
        Data::DateTime(dt) if dt.is_datetime() => {
            let (y, mo, d, h, mi, sec, _) = dt.to_ymd_hms_milli();
            if (h, mi, sec) == (0, 0, 0) {
                format!("{y:04}-{mo:02}-{d:02}")
            } else {
                format!("{y:04}-{mo:02}-{d:02}T{h:02}:{mi:02}:{sec:02}")
            }
        }
        Data::DateTime(dt) => Value::Float(dt.as_f64()).render(),
        Data::DateTimeIso(s) | Data::DurationIso(s) => s.clone(),
        Data::Error(e) => format!("#{e:?}"),
    }
}
