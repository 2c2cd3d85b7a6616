//! The drive engine: read a requirements table, verify it, interpret it and
//! execute it against a platform.

mod exchange;
mod instantiate;
mod interpret;
mod parse;

pub use exchange::{parse_data_exchange_table, serialize_data_exchange_table, ExchangeRows};
pub use instantiate::{build_instance, instantiate, CreationEntry, Mode, Platform};
pub use interpret::validate_reta;
pub use parse::{parse_metadata_table, Cell, FieldRow, ReTaDocument, SchemaBlock, TenantRow, UserRow};

use crate::error::{Error, Result};
use crate::report::ValidationReport;
use crate::tabular::TabularDocument;

/// Reads spreadsheet bytes and runs parse and validation.
pub fn load_metadata(bytes: &[u8], origin: &str) -> Result<(ReTaDocument, ValidationReport)> {
    let doc = TabularDocument::from_bytes(bytes, origin)?;
    let reta = parse_metadata_table(&doc).map_err(Error::Parse)?;
    let report = validate_reta(&reta);
    Ok((reta, report))
}
