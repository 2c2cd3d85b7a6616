//! Domain types of a generated data-management system: tenant, groups, users,
//! schemas and the records stored under each schema.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::PasswordDigest;
use crate::error::InvalidPermissionLetter;

/// One of the four data operations a permission can grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Permission {
    Create,
    Read,
    Update,
    Delete,
}

impl Permission {
    pub const ALL: [Permission; 4] = [Self::Create, Self::Read, Self::Update, Self::Delete];

    pub fn letter(self) -> char {
        match self {
            Self::Create => 'C',
            Self::Read => 'R',
            Self::Update => 'U',
            Self::Delete => 'D',
        }
    }

    fn bit(self) -> u8 {
        match self {
            Self::Create => 0b0001,
            Self::Read => 0b0010,
            Self::Update => 0b0100,
            Self::Delete => 0b1000,
        }
    }
}

/// A subset of {Create, Read, Update, Delete}.
///
/// Renders canonically as the matching subsequence of `"CRUD"`. Parsing accepts
/// the letters in any order and case, duplicates, and `""`/`"-"` for the empty set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PermissionSet(u8);

impl PermissionSet {
    pub const EMPTY: PermissionSet = PermissionSet(0);
    pub const FULL: PermissionSet = PermissionSet(0b1111);

    /// Builds the set whose membership is given by the low four bits (C, R, U, D).
    pub fn from_bits(bits: u8) -> Self {
        PermissionSet(bits & 0b1111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, p: Permission) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn insert(&mut self, p: Permission) {
        self.0 |= p.bit();
    }

    pub fn union(self, other: PermissionSet) -> PermissionSet {
        PermissionSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: PermissionSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Permission> {
        Permission::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// All sixteen subsets, in bit order.
    pub fn all_subsets() -> impl Iterator<Item = PermissionSet> {
        (0u8..16).map(PermissionSet)
    }
}

impl FromIterator<Permission> for PermissionSet {
    fn from_iter<I: IntoIterator<Item = Permission>>(iter: I) -> Self {
        let mut set = PermissionSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

/// Canonical storage/wire form, e.g. `{Update, Read}` renders as `"RU"`.
pub fn canonical_permission_string(p: PermissionSet) -> String {
    p.iter().map(Permission::letter).collect()
}

/// Parses a permission cell. See [`PermissionSet`] for the accepted forms.
pub fn parse_permission_spec(text: &str) -> Result<PermissionSet, InvalidPermissionLetter> {
    if text == "-" {
        return Ok(PermissionSet::EMPTY);
    }
    let mut set = PermissionSet::EMPTY;
    for (index, ch) in text.chars().enumerate() {
        let p = match ch.to_ascii_uppercase() {
            'C' => Permission::Create,
            'R' => Permission::Read,
            'U' => Permission::Update,
            'D' => Permission::Delete,
            _ => return Err(InvalidPermissionLetter { letter: ch, index }),
        };
        set.insert(p);
    }
    Ok(set)
}

impl fmt::Display for PermissionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_permission_string(*self))
    }
}

impl fmt::Debug for PermissionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PermissionSet({:?})", canonical_permission_string(*self))
    }
}

impl FromStr for PermissionSet {
    type Err = InvalidPermissionLetter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_permission_spec(s)
    }
}

impl Serialize for PermissionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&canonical_permission_string(*self))
    }
}

impl<'de> Deserialize<'de> for PermissionSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// The closed field-type vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    String,
    Int,
    Float,
    Bool,
    Date,
}

impl FieldType {
    pub const ALL: [FieldType; 5] = [Self::String, Self::Int, Self::Float, Self::Bool, Self::Date];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::String => "string",
            Self::Int => "int",
            Self::Float => "float",
            Self::Bool => "bool",
            Self::Date => "date",
        }
    }

    /// Parses a type keyword, case-insensitively.
    pub fn from_keyword(text: &str) -> Option<FieldType> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(text))
    }

    pub fn is_ordered(self) -> bool {
        matches!(self, Self::Int | Self::Float | Self::Date)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Self::Int | Self::Float)
    }

    /// Coerces a spreadsheet literal. The empty string is *not* handled here;
    /// callers map empty cells to null before coercion.
    pub fn parse_literal(self, text: &str) -> Result<Value, LiteralError> {
        let err = || LiteralError {
            ftype: self,
            literal: text.to_string(),
        };
        match self {
            Self::String => Ok(Value::String(text.to_string())),
            Self::Int => {
                let digits = text.strip_prefix(['+', '-']).unwrap_or(text);
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(err());
                }
                text.parse::<i64>().map(Value::Int).map_err(|_| err())
            }
            Self::Float => {
                if !is_float_literal(text) {
                    return Err(err());
                }
                match text.parse::<f64>() {
                    Ok(f) if f.is_finite() => Ok(Value::Float(f)),
                    _ => Err(err()),
                }
            }
            Self::Bool => {
                if text.eq_ignore_ascii_case("true") {
                    Ok(Value::Bool(true))
                } else if text.eq_ignore_ascii_case("false") {
                    Ok(Value::Bool(false))
                } else {
                    Err(err())
                }
            }
            Self::Date => parse_iso_date(text).map(Value::Date).ok_or_else(err),
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A literal that does not parse under its field type.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{literal:?} is not a valid {ftype} literal")]
pub struct LiteralError {
    pub ftype: FieldType,
    pub literal: String,
}

/// `[+-]? (digits [. digits?] | . digits) ([eE] [+-]? digits)?`
fn is_float_literal(text: &str) -> bool {
    let bytes = text.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut mantissa_digits = i - int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        mantissa_digits += i - frac_start;
    }
    if mantissa_digits == 0 {
        return false;
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        i += 1;
        if matches!(bytes.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == bytes.len()
}

/// Strict `YYYY-MM-DD`.
pub fn parse_iso_date(text: &str) -> Option<NaiveDate> {
    let b = text.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        let s = &text[r];
        s.bytes()
            .all(|c| c.is_ascii_digit())
            .then(|| s.parse().ok())
            .flatten()
    };
    let year = digits(0..4)? as i32;
    let month = digits(5..7)?;
    let day = digits(8..10)?;
    NaiveDate::from_ymd_opt(year, month, day)
}

/// A typed, non-null field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    String(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Date(NaiveDate),
}

impl Value {
    pub fn field_type(&self) -> FieldType {
        match self {
            Value::String(_) => FieldType::String,
            Value::Int(_) => FieldType::Int,
            Value::Float(_) => FieldType::Float,
            Value::Bool(_) => FieldType::Bool,
            Value::Date(_) => FieldType::Date,
        }
    }

    /// Renders the value in the literal form accepted by [`FieldType::parse_literal`].
    ///
    /// Floats use the shortest representation that parses back to the same bits.
    pub fn render(&self) -> String {
        match self {
            Value::String(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => format!("{f:?}"),
            Value::Bool(b) => b.to_string(),
            Value::Date(d) => d.format("%Y-%m-%d").to_string(),
        }
    }

    /// Order among values of the same type. Mixed int/float compare
    /// numerically; other mixed pairs return `None`. Stored floats are always
    /// finite, so `-0.0` and `0.0` compare equal.
    pub fn compare(&self, other: &Value) -> Option<std::cmp::Ordering> {
        use Value::*;
        match (self, other) {
            (String(a), String(b)) => Some(a.cmp(b)),
            (Int(a), Int(b)) => Some(a.cmp(b)),
            (Float(a), Float(b)) => a.partial_cmp(b),
            (Int(a), Float(b)) => (*a as f64).partial_cmp(b),
            (Float(a), Int(b)) => a.partial_cmp(&(*b as f64)),
            (Bool(a), Bool(b)) => Some(a.cmp(b)),
            (Date(a), Date(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// JSON rendering used on the wire: dates as `YYYY-MM-DD` strings.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::String(s) => serde_json::Value::String(s.clone()),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Date(_) => serde_json::Value::String(self.render()),
        }
    }

    /// Coerces a JSON value to `ftype`. Native JSON types are taken as-is;
    /// strings are accepted for every type via [`FieldType::parse_literal`].
    /// `Ok(None)` means JSON null (or an empty string).
    pub fn from_json(ftype: FieldType, json: &serde_json::Value) -> Result<Option<Value>, LiteralError> {
        use serde_json::Value as J;
        let err = || LiteralError {
            ftype,
            literal: json.to_string(),
        };
        match (ftype, json) {
            (_, J::Null) => Ok(None),
            (_, J::String(s)) if s.is_empty() => Ok(None),
            (_, J::String(s)) => ftype.parse_literal(s).map(Some),
            (FieldType::Int, J::Number(n)) => n.as_i64().map(|i| Some(Value::Int(i))).ok_or_else(err),
            (FieldType::Float, J::Number(n)) => n
                .as_f64()
                .filter(|f| f.is_finite())
                .map(|f| Some(Value::Float(f)))
                .ok_or_else(err),
            (FieldType::Bool, J::Bool(b)) => Ok(Some(Value::Bool(*b))),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Field attribute tokens that may follow a field's type and name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum OtherAttribute {
    Nullable,
    NotNull,
    Unique,
    Default(Value),
}

impl OtherAttribute {
    /// Parses one attribute token; `default=` literals are typed by `ftype`.
    pub fn parse(token: &str, ftype: FieldType) -> Result<OtherAttribute, String> {
        if let Some((key, literal)) = token.split_once('=') {
            if !key.trim().eq_ignore_ascii_case("default") {
                return Err(format!("unknown attribute {token:?}"));
            }
            if literal.is_empty() {
                return Err("empty default literal".into());
            }
            return ftype
                .parse_literal(literal)
                .map(OtherAttribute::Default)
                .map_err(|e| format!("default: {e}"));
        }
        match token.to_ascii_lowercase().as_str() {
            "nullable" => Ok(OtherAttribute::Nullable),
            "notnull" => Ok(OtherAttribute::NotNull),
            "unique" => Ok(OtherAttribute::Unique),
            _ => Err(format!("unknown attribute {token:?}")),
        }
    }

    pub fn token(&self) -> String {
        match self {
            Self::Nullable => "nullable".into(),
            Self::NotNull => "notnull".into(),
            Self::Unique => "unique".into(),
            Self::Default(v) => format!("default={}", v.render()),
        }
    }

    fn sort_key(&self) -> u8 {
        match self {
            Self::Nullable => 0,
            Self::NotNull => 1,
            Self::Unique => 2,
            Self::Default(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDef {
    pub fname: String,
    pub ftype: FieldType,
    /// Kept sorted by kind, so two definitions with the same attribute set compare equal.
    pub attributes: Vec<OtherAttribute>,
}

impl FieldDef {
    pub fn new(fname: impl Into<String>, ftype: FieldType) -> Self {
        FieldDef {
            fname: fname.into(),
            ftype,
            attributes: Vec::new(),
        }
    }

    pub fn with(mut self, attr: OtherAttribute) -> Self {
        self.attributes.push(attr);
        self.attributes.sort_by_key(OtherAttribute::sort_key);
        self
    }

    /// Fields are not-null unless marked `nullable`.
    pub fn nullable(&self) -> bool {
        self.attributes.contains(&OtherAttribute::Nullable)
    }

    pub fn unique(&self) -> bool {
        self.attributes.contains(&OtherAttribute::Unique)
    }

    pub fn default_value(&self) -> Option<&Value> {
        self.attributes.iter().find_map(|a| match a {
            OtherAttribute::Default(v) => Some(v),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDef {
    pub schemaid: String,
    /// Owning group.
    pub group: String,
    /// The user holding full authority over this schema.
    pub entry: String,
    pub gpermission: PermissionSet,
    pub opermission: PermissionSet,
    pub fields: Vec<FieldDef>,
}

impl SchemaDef {
    pub fn field_index(&self, fname: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.fname == fname)
    }

    pub fn field(&self, fname: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.fname == fname)
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.fname.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDef {
    pub groupid: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDef {
    pub userid: String,
    pub username: String,
    pub password: PasswordDigest,
    pub memberships: Vec<String>,
}

impl UserDef {
    pub fn is_member_of(&self, groupid: &str) -> bool {
        self.memberships.iter().any(|g| g == groupid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantDescriptor {
    pub id: String,
    pub password: PasswordDigest,
    pub system_name: String,
}

/// Engine-assigned record id: a per-(tenant, schema) counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for RecordId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(RecordId)
    }
}

impl Serialize for RecordId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RecordId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// One structured record. `values[i]` holds the value of the schema's i-th field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub id: RecordId,
    pub values: Vec<Option<Value>>,
}

impl DataRecord {
    pub fn get<'a>(&'a self, schema: &SchemaDef, fname: &str) -> Option<&'a Value> {
        schema
            .field_index(fname)
            .and_then(|i| self.values.get(i))
            .and_then(Option::as_ref)
    }

    /// JSON rendering `{"id": "..", "values": {fname: value, ..}}` in schema order.
    pub fn to_json(&self, schema: &SchemaDef) -> serde_json::Value {
        let values: serde_json::Map<String, serde_json::Value> = schema
            .fields
            .iter()
            .zip(&self.values)
            .map(|(f, v)| {
                let json = v.as_ref().map_or(serde_json::Value::Null, Value::to_json);
                (f.fname.clone(), json)
            })
            .collect();
        serde_json::json!({ "id": self.id, "values": values })
    }
}

/// Records of one schema plus the id counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub next_id: u64,
    pub records: BTreeMap<RecordId, DataRecord>,
}

impl Collection {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// The materialized system of one tenant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemInstance {
    pub tenant: TenantDescriptor,
    pub groups: Vec<GroupDef>,
    pub users: Vec<UserDef>,
    pub schemas: Vec<SchemaDef>,
    /// Keyed by schemaid.
    pub data: BTreeMap<String, Collection>,
}

impl SystemInstance {
    pub fn new(tenant: TenantDescriptor) -> Self {
        SystemInstance {
            tenant,
            groups: Vec::new(),
            users: Vec::new(),
            schemas: Vec::new(),
            data: BTreeMap::new(),
        }
    }

    pub fn tenant_id(&self) -> &str {
        &self.tenant.id
    }

    pub fn schema(&self, schemaid: &str) -> Option<&SchemaDef> {
        self.schemas.iter().find(|s| s.schemaid == schemaid)
    }

    pub fn user(&self, userid: &str) -> Option<&UserDef> {
        self.users.iter().find(|u| u.userid == userid)
    }

    pub fn has_group(&self, groupid: &str) -> bool {
        self.groups.iter().any(|g| g.groupid == groupid)
    }

    pub fn summary(&self) -> SystemSummary {
        SystemSummary {
            tenant: self.tenant.id.clone(),
            system_name: self.tenant.system_name.clone(),
            groups: self.groups.len(),
            users: self.users.len(),
            schemas: self.schemas.len(),
            records: self.data.values().map(Collection::len).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub tenant: String,
    pub system_name: String,
    pub groups: usize,
    pub users: usize,
    pub schemas: usize,
    pub records: usize,
}

/// Ids are nonempty and contain no whitespace. Group ids additionally may not
/// contain `;`, the membership separator.
pub fn is_valid_identifier(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace)
}
