//! Durable multi-tenant store.
//!
//! Every tenant owns a directory holding a snapshot of its system and an
//! append-only log of the record writes made since. Writes to one tenant are
//! serialized by that tenant's lock; tenants never share a lock beyond the
//! short-lived lookup of the tenant table.
//!
//! ```text
//! <data>/creation.log                 one JSON line per created tenant
//! <data>/tenants/<hex id>/snapshot.json
//! <data>/tenants/<hex id>/wal.jsonl
//! <data>/trash/                       deleted tenants awaiting removal
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::data::{Aggregate, FieldValues, ImportOutcome, Query, QueryResult, StatValue};
use crate::error::{Error, Result};
use crate::filter::FilterExpr;
use crate::model::{Collection, DataRecord, RecordId, SystemInstance, SystemSummary};
use crate::reta::{build_instance, parse_data_exchange_table, serialize_data_exchange_table, CreationEntry, Mode, ReTaDocument};
use crate::tabular::TabularDocument;
use crate::validate::validate_instance;

/// Log length at which a tenant's log is folded into a new snapshot.
const COMPACT_AFTER: u64 = 4096;

#[derive(Debug, Clone, Default)]
pub struct StoreOptions {
    /// `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// fsync every write before acknowledging it.
    pub sync: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
enum WalEntry {
    Insert { schema: String, record: DataRecord },
    Update { schema: String, record: DataRecord },
    Delete { schema: String, id: RecordId },
    Import { schema: String, records: Vec<DataRecord> },
}

#[derive(Debug, Serialize, Deserialize)]
struct WalLine {
    seq: u64,
    #[serde(flatten)]
    entry: WalEntry,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    system: SystemInstance,
}

struct Disk {
    dir: PathBuf,
    wal: File,
    sync: bool,
}

struct TenantState {
    system: SystemInstance,
    disk: Option<Disk>,
    /// Sequence number of the last applied log entry.
    seq: u64,
    /// Entries in the log file since the last snapshot.
    wal_len: u64,
    deleted: bool,
}

type Slot = Arc<RwLock<TenantState>>;

struct Inner {
    options: StoreOptions,
    tenants: RwLock<HashMap<String, Slot>>,
    creation_log: Mutex<Vec<CreationEntry>>,
    trash_counter: AtomicU64,
}

/// Thread-safe handle; clones share the same store.
#[derive(Clone)]
pub struct Store {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("data_dir", &self.inner.options.data_dir)
            .field("tenants", &self.tenants().len())
            .finish()
    }
}

fn read_lock<T>(lock: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

fn write_lock<T>(lock: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    lock.write().unwrap_or_else(|e| e.into_inner())
}

fn mutex<T>(lock: &Mutex<T>) -> MutexGuard<'_, T> {
    lock.lock().unwrap_or_else(|e| e.into_inner())
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("{}: {e}", path.display()))
}

fn unknown_tenant(tenant: &str) -> Error {
    Error::UnknownTenant(tenant.to_string())
}

impl Store {
    pub fn in_memory() -> Store {
        Store::with_options(StoreOptions::default()).expect("an in-memory store has nothing to load")
    }

    /// Opens (creating if needed) a durable store under `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Store> {
        Store::with_options(StoreOptions {
            data_dir: Some(dir.into()),
            sync: false,
        })
    }

    pub fn with_options(options: StoreOptions) -> Result<Store> {
        let mut tenants = HashMap::new();
        let mut creation_log = Vec::new();
        if let Some(dir) = &options.data_dir {
            fs::create_dir_all(dir.join("tenants"))?;
            let trash = dir.join("trash");
            if trash.exists() {
                fs::remove_dir_all(&trash)?;
            }
            for entry in fs::read_dir(dir.join("tenants"))? {
                let path = entry?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                if name.starts_with('.') {
                    // unfinished creation
                    fs::remove_dir_all(&path)?;
                    continue;
                }
                let state = load_tenant(&path, options.sync)?;
                tenants.insert(state.system.tenant.id.clone(), Arc::new(RwLock::new(state)));
            }
            creation_log = load_creation_log(&dir.join("creation.log"))?;
        }
        Ok(Store {
            inner: Arc::new(Inner {
                options,
                tenants: RwLock::new(tenants),
                creation_log: Mutex::new(creation_log),
                trash_counter: AtomicU64::new(0),
            }),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.inner.options.data_dir.as_deref()
    }

    /// Tenant ids in sorted order.
    pub fn tenants(&self) -> Vec<String> {
        let mut ids: Vec<String> = read_lock(&self.inner.tenants).keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn contains(&self, tenant: &str) -> bool {
        read_lock(&self.inner.tenants).contains_key(tenant)
    }

    pub fn creation_log(&self) -> Vec<CreationEntry> {
        mutex(&self.inner.creation_log).clone()
    }

    fn slot(&self, tenant: &str) -> Result<Slot> {
        read_lock(&self.inner.tenants)
            .get(tenant)
            .cloned()
            .ok_or_else(|| unknown_tenant(tenant))
    }

    /// Runs `f` against a consistent view of the tenant's system.
    pub fn read<R>(&self, tenant: &str, f: impl FnOnce(&SystemInstance) -> R) -> Result<R> {
        let slot = self.slot(tenant)?;
        let state = read_lock(&slot);
        if state.deleted {
            return Err(unknown_tenant(tenant));
        }
        Ok(f(&state.system))
    }

    fn write<R>(&self, tenant: &str, f: impl FnOnce(&mut TenantState) -> Result<R>) -> Result<R> {
        let slot = self.slot(tenant)?;
        let mut state = write_lock(&slot);
        if state.deleted {
            return Err(unknown_tenant(tenant));
        }
        f(&mut state)
    }

    pub fn get_system(&self, tenant: &str) -> Result<SystemInstance> {
        self.read(tenant, Clone::clone)
    }

    /// Stores `system`, replacing any system with the same tenant id.
    pub fn put_system(&self, system: SystemInstance) -> Result<()> {
        let report = validate_instance(&system);
        if !report.is_empty() {
            return Err(Error::Invalid(report));
        }
        let tenant = system.tenant.id.clone();
        if let Ok(slot) = self.slot(&tenant) {
            let mut state = write_lock(&slot);
            if !state.deleted {
                return self.replace_state(&mut state, system);
            }
        }
        self.create(system).map(|_| ())
    }

    /// Registers a new tenant. Fails with `DuplicateTenant` if the id is taken.
    fn create(&self, system: SystemInstance) -> Result<SystemSummary> {
        let tenant = system.tenant.id.clone();
        let mut tenants = write_lock(&self.inner.tenants);
        if tenants.contains_key(&tenant) {
            return Err(Error::DuplicateTenant(tenant));
        }
        let summary = system.summary();
        let disk = match &self.inner.options.data_dir {
            Some(dir) => Some(self.create_on_disk(dir, &system)?),
            None => None,
        };
        let entry = CreationEntry {
            tenant: tenant.clone(),
            at: Utc::now(),
        };
        if let Some(dir) = &self.inner.options.data_dir {
            let mut line = serde_json::to_vec(&entry).map_err(|e| Error::Corrupt(e.to_string()))?;
            line.push(b'\n');
            let mut log = OpenOptions::new().create(true).append(true).open(dir.join("creation.log"))?;
            log.write_all(&line)?;
            if self.inner.options.sync {
                log.sync_data()?;
            }
        }
        mutex(&self.inner.creation_log).push(entry);
        let state = TenantState {
            system,
            disk,
            seq: 0,
            wal_len: 0,
            deleted: false,
        };
        tenants.insert(tenant, Arc::new(RwLock::new(state)));
        Ok(summary)
    }

    fn create_on_disk(&self, dir: &Path, system: &SystemInstance) -> Result<Disk> {
        let tenants = dir.join("tenants");
        let name = hex::encode(system.tenant.id.as_bytes());
        let staging = tenants.join(format!(".{name}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        write_snapshot(&staging, 0, system, self.inner.options.sync)?;
        File::create(staging.join("wal.jsonl"))?;
        let target = tenants.join(&name);
        fs::rename(&staging, &target)?;
        let wal = OpenOptions::new().append(true).open(target.join("wal.jsonl"))?;
        Ok(Disk {
            dir: target,
            wal,
            sync: self.inner.options.sync,
        })
    }

    fn replace_state(&self, state: &mut TenantState, system: SystemInstance) -> Result<()> {
        if let Some(disk) = &mut state.disk {
            write_snapshot(&disk.dir, state.seq, &system, disk.sync)?;
            disk.wal = File::create(disk.dir.join("wal.jsonl"))?;
        }
        state.wal_len = 0;
        state.system = system;
        Ok(())
    }

    /// Removes a tenant and all of its records.
    pub fn delete_system(&self, tenant: &str) -> Result<()> {
        let mut tenants = write_lock(&self.inner.tenants);
        let slot = tenants.get(tenant).cloned().ok_or_else(|| unknown_tenant(tenant))?;
        let mut state = write_lock(&slot);
        if let Some(disk) = state.disk.take() {
            let dir = self.inner.options.data_dir.as_ref().expect("disk state implies a data dir");
            let trash = dir.join("trash");
            fs::create_dir_all(&trash)?;
            let n = self.inner.trash_counter.fetch_add(1, AtomicOrdering::Relaxed);
            let target = trash.join(format!("{}-{n}", hex::encode(tenant.as_bytes())));
            drop(disk.wal);
            fs::rename(&disk.dir, &target)?;
            // the rename is the commit point; a leftover trash dir is cleared on open
            let _ = fs::remove_dir_all(&target);
        }
        state.deleted = true;
        tenants.remove(tenant);
        Ok(())
    }

    /// Runs a parsed table through the engine. Create registers a new tenant;
    /// replace swaps an existing tenant's metadata.
    pub fn instantiate(&self, reta: &ReTaDocument, mode: Mode) -> Result<SystemSummary> {
        let tenant = reta.tenant.id.text.clone();
        match mode {
            Mode::Create => {
                if self.contains(&tenant) {
                    return Err(Error::DuplicateTenant(tenant));
                }
                // digests are computed outside the tenant table lock
                let system = build_instance(reta, None, Mode::Create)?;
                self.create(system)
            }
            Mode::Replace => {
                let slot = match self.slot(&tenant) {
                    Ok(slot) => slot,
                    Err(_) => return build_instance(reta, None, Mode::Replace).map(|s| s.summary()),
                };
                let mut state = write_lock(&slot);
                if state.deleted {
                    return Err(unknown_tenant(&tenant));
                }
                let system = build_instance(reta, Some(&state.system), Mode::Replace)?;
                let summary = system.summary();
                self.replace_state(&mut state, system)?;
                Ok(summary)
            }
        }
    }

    /// Edits a tenant's metadata. The edited system must validate; records of
    /// schemas whose field list changed are dropped, as in replace mode.
    pub fn update_metadata<R>(&self, tenant: &str, f: impl FnOnce(&mut SystemInstance) -> Result<R>) -> Result<R> {
        self.write(tenant, |state| {
            let mut system = state.system.clone();
            let out = f(&mut system)?;
            if system.tenant.id != tenant {
                return Err(Error::SchemaMismatch("tenant id cannot change".into()));
            }
            let old = &state.system;
            system.data = system
                .schemas
                .iter()
                .map(|s| {
                    let kept = old
                        .schema(&s.schemaid)
                        .filter(|o| o.fields == s.fields)
                        .and_then(|_| system.data.get(&s.schemaid).cloned());
                    (s.schemaid.clone(), kept.unwrap_or_else(Collection::default))
                })
                .collect();
            let report = validate_instance(&system);
            if !report.is_empty() {
                return Err(Error::Invalid(report));
            }
            self.replace_state(state, system)?;
            Ok(out)
        })
    }

    pub fn insert_record(&self, tenant: &str, schema: &str, values: &FieldValues) -> Result<RecordId> {
        self.write(tenant, |state| {
            let id = state.system.insert_record(schema, values)?;
            let record = state.system.get_record(schema, id)?.clone();
            let entry = WalEntry::Insert {
                schema: schema.to_string(),
                record,
            };
            log_or_rollback(state, entry, |s| {
                let c = s.data.get_mut(schema).expect("just inserted");
                c.records.remove(&id);
                c.next_id = id.0;
            })?;
            Ok(id)
        })
    }

    pub fn update_record(&self, tenant: &str, schema: &str, id: RecordId, partial: &FieldValues) -> Result<DataRecord> {
        self.write(tenant, |state| {
            let before = state.system.get_record(schema, id)?.clone();
            let record = state.system.update_record(schema, id, partial)?;
            let entry = WalEntry::Update {
                schema: schema.to_string(),
                record: record.clone(),
            };
            log_or_rollback(state, entry, |s| {
                s.data.get_mut(schema).expect("just updated").records.insert(id, before);
            })?;
            Ok(record)
        })
    }

    pub fn delete_record(&self, tenant: &str, schema: &str, id: RecordId) -> Result<()> {
        self.write(tenant, |state| {
            let before = state.system.get_record(schema, id)?.clone();
            state.system.delete_record(schema, id)?;
            let entry = WalEntry::Delete {
                schema: schema.to_string(),
                id,
            };
            log_or_rollback(state, entry, |s| {
                s.data.get_mut(schema).expect("just deleted").records.insert(id, before);
            })
        })
    }

    pub fn get_record(&self, tenant: &str, schema: &str, id: RecordId) -> Result<DataRecord> {
        self.read(tenant, |s| s.get_record(schema, id).cloned())?
    }

    pub fn query(&self, tenant: &str, schema: &str, query: &Query) -> Result<QueryResult> {
        self.read(tenant, |s| s.query(schema, query))?
    }

    pub fn statistics(&self, tenant: &str, schema: &str, fname: &str, agg: Aggregate, filter: &FilterExpr) -> Result<StatValue> {
        self.read(tenant, |s| s.statistics(schema, fname, agg, filter))?
    }

    /// Imports a data exchange table as one batch. With `atomic`, either
    /// every row is inserted or none is.
    pub fn import(&self, tenant: &str, schema: &str, doc: &TabularDocument, atomic: bool) -> Result<ImportOutcome> {
        self.write(tenant, |state| {
            let schema_def = state.system.schema_or_err(schema)?;
            let parsed = parse_data_exchange_table(doc, schema_def, atomic)?;
            let mut outcome = state.system.import_rows(schema, parsed.rows, atomic)?;
            outcome.rejected.extend(parsed.rejected);
            outcome.rejected.sort_by_key(|r| (r.row, r.column));
            if outcome.ids.is_empty() {
                return Ok(outcome);
            }
            let records: Vec<DataRecord> = outcome
                .ids
                .iter()
                .map(|id| state.system.get_record(schema, *id).cloned())
                .collect::<Result<_>>()?;
            let first = outcome.ids[0];
            let ids = outcome.ids.clone();
            let entry = WalEntry::Import {
                schema: schema.to_string(),
                records,
            };
            log_or_rollback(state, entry, |s| {
                let c = s.data.get_mut(schema).expect("just imported");
                for id in &ids {
                    c.records.remove(id);
                }
                c.next_id = first.0;
            })?;
            Ok(outcome)
        })
    }

    /// All records of a schema, in id order, as a data exchange table.
    pub fn export(&self, tenant: &str, schema: &str) -> Result<TabularDocument> {
        self.read(tenant, |s| {
            let (schema_def, collection) = s.collection(schema)?;
            let records: Vec<DataRecord> = collection
                .map(|c| c.records.values().cloned().collect())
                .unwrap_or_default();
            serialize_data_exchange_table(&records, schema_def, &format!("{schema}.csv"))
        })?
    }

    /// Folds every tenant's log into a fresh snapshot and syncs it.
    pub fn flush(&self) -> Result<()> {
        let slots: Vec<Slot> = read_lock(&self.inner.tenants).values().cloned().collect();
        for slot in slots {
            let mut state = write_lock(&slot);
            if !state.deleted {
                compact(&mut state)?;
            }
        }
        Ok(())
    }
}

/// Appends `entry` to the tenant's log. If the append fails the in-memory
/// change is undone with `undo`, so memory never runs ahead of disk.
fn log_or_rollback(state: &mut TenantState, entry: WalEntry, undo: impl FnOnce(&mut SystemInstance)) -> Result<()> {
    let seq = state.seq + 1;
    if let Some(disk) = &mut state.disk {
        let line = WalLine { seq, entry };
        let mut bytes = serde_json::to_vec(&line).map_err(|e| Error::Corrupt(e.to_string()))?;
        bytes.push(b'\n');
        let written = disk
            .wal
            .write_all(&bytes)
            .and_then(|_| if disk.sync { disk.wal.sync_data() } else { Ok(()) });
        if let Err(e) = written {
            undo(&mut state.system);
            return Err(e.into());
        }
        state.wal_len += 1;
    }
    state.seq = seq;
    if state.wal_len >= COMPACT_AFTER {
        compact(state)?;
    }
    Ok(())
}

fn compact(state: &mut TenantState) -> Result<()> {
    if let Some(disk) = &mut state.disk {
        write_snapshot(&disk.dir, state.seq, &state.system, true)?;
        disk.wal = File::create(disk.dir.join("wal.jsonl"))?;
        disk.wal.sync_all()?;
        state.wal_len = 0;
    }
    Ok(())
}

fn write_snapshot(dir: &Path, seq: u64, system: &SystemInstance, sync: bool) -> Result<()> {
    let tmp = dir.join("snapshot.json.tmp");
    let mut file = File::create(&tmp)?;
    let snapshot = Snapshot {
        seq,
        system: system.clone(),
    };
    serde_json::to_writer(&mut file, &snapshot).map_err(|e| Error::Corrupt(e.to_string()))?;
    if sync {
        file.sync_all()?;
    }
    fs::rename(&tmp, dir.join("snapshot.json"))?;
    Ok(())
}

fn load_tenant(dir: &Path, sync: bool) -> Result<TenantState> {
    let snapshot_path = dir.join("snapshot.json");
    let file = File::open(&snapshot_path).map_err(|e| corrupt(&snapshot_path, e))?;
    let Snapshot { seq, mut system } =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| corrupt(&snapshot_path, e))?;
    let wal_path = dir.join("wal.jsonl");
    let mut last = seq;
    let mut wal_len = 0;
    if wal_path.exists() {
        let lines: Vec<String> = BufReader::new(File::open(&wal_path)?).lines().collect::<std::io::Result<_>>()?;
        let count = lines.len();
        for (i, text) in lines.iter().enumerate() {
            let line: WalLine = match serde_json::from_str(text) {
                Ok(line) => line,
                // a torn final line is a write that was never acknowledged
                Err(_) if i + 1 == count => break,
                Err(e) => return Err(corrupt(&wal_path, format!("line {}: {e}", i + 1))),
            };
            wal_len += 1;
            if line.seq <= last {
                continue;
            }
            apply(&mut system, line.entry).map_err(|e| corrupt(&wal_path, format!("line {}: {e}", i + 1)))?;
            last = line.seq;
        }
    }
    let report = validate_instance(&system);
    if !report.is_empty() {
        return Err(corrupt(dir, report));
    }
    let mut state = TenantState {
        system,
        disk: Some(Disk {
            dir: dir.to_path_buf(),
            wal: OpenOptions::new().create(true).append(true).open(&wal_path)?,
            sync,
        }),
        seq: last,
        wal_len,
        deleted: false,
    };
    // start from a clean log so a torn tail is not appended to
    compact(&mut state)?;
    Ok(state)
}

fn apply(system: &mut SystemInstance, entry: WalEntry) -> Result<()> {
    let (schema, records, remove) = match entry {
        WalEntry::Insert { schema, record } | WalEntry::Update { schema, record } => (schema, vec![record], None),
        WalEntry::Import { schema, records } => (schema, records, None),
        WalEntry::Delete { schema, id } => (schema, Vec::new(), Some(id)),
    };
    system.schema_or_err(&schema)?;
    let collection = system.data.entry(schema).or_default();
    if let Some(id) = remove {
        collection.records.remove(&id);
    }
    for record in records {
        collection.next_id = collection.next_id.max(record.id.0 + 1);
        collection.records.insert(record.id, record);
    }
    Ok(())
}

fn load_creation_log(path: &Path) -> Result<Vec<CreationEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if let Ok(entry) = serde_json::from_str(&line) {
            out.push(entry);
        }
    }
    Ok(out)
}
