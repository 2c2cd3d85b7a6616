//! Core of the requirements-table platform: the system model, the drive
//! engine that turns a metadata table into a running system, the permission
//! model and the multi-tenant record store.

pub mod data;
pub mod digest;
pub mod error;
pub mod filter;
pub mod model;
pub mod permission;
pub mod report;
pub mod reta;
pub mod store;
pub mod tabular;
pub mod validate;

pub use data::{Aggregate, FieldValues, ImportOutcome, Order, Page, Query, QueryResult, StatValue};
pub use digest::PasswordDigest;
pub use error::{Error, Result};
pub use filter::{FilterExpr, Op, Predicate};
pub use model::*;
pub use permission::{authorize, effective_permissions, Action, Decision, DenyReason, Principal};
pub use report::{Diagnostic, Rule, Severity, ValidationReport};
pub use reta::{instantiate, load_metadata, parse_metadata_table, validate_reta, Mode, Platform, ReTaDocument};
pub use store::{Store, StoreOptions};
pub use tabular::{Format, TabularDocument};
pub use validate::validate_instance;
