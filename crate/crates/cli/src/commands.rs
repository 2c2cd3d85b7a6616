use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use reta_client::{Client, ClientError};
use reta_core::data::ImportOutcome;
use reta_core::permission::Principal;
use reta_core::reta::{load_metadata, Mode};
use reta_core::{Error, Store, SystemSummary, TabularDocument, ValidationReport};
use reta_server::ServerConfig;
use serde_json::{json, Value};

use crate::Format;

#[derive(Debug)]
pub enum Failure {
    /// The input or the platform refused the operation.
    Domain(String),
    /// Bad invocation, unreadable files, network or disk trouble.
    Usage(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Domain(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        match err {
            Error::Io(e) => Failure::Usage(e.to_string()),
            other => Failure::Domain(other.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(err: ClientError) -> Self {
        match err {
            ClientError::Api { .. } => Failure::Domain(err.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

pub struct Context {
    pub config: ServerConfig,
    pub format: Format,
    pub server: Option<String>,
    pub token: Option<String>,
}

impl Context {
    fn emit(&self, text: impl fmt::Display, json: Value) {
        let mut out = std::io::stdout().lock();
        let _ = match self.format {
            Format::Text => writeln!(out, "{text}"),
            Format::Json => writeln!(out, "{json}"),
        };
    }

    fn client(&self, token: Option<&str>) -> Result<Option<Client>, Failure> {
        let Some(url) = &self.server else { return Ok(None) };
        let client = Client::new(url)?;
        Ok(Some(match token {
            Some(t) => client.with_token(t),
            None => client,
        }))
    }

    /// Opens the local store, holding the data directory's lock for the
    /// lifetime of the returned guard.
    fn store(&self) -> Result<(Store, DirLock), Failure> {
        let dir = self
            .config
            .data_dir
            .clone()
            .ok_or_else(|| Failure::Usage("no data directory configured".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
        let lock = DirLock::acquire(&dir)?;
        let store = reta_server::open_store(&self.config).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("{}: {io}", dir.display())),
            other => Failure::Domain(other.to_string()),
        })?;
        Ok((store, lock))
    }
}

/// Exclusive lock on a data directory, so that two processes never write to
/// the same one.
pub struct DirLock(#[allow(dead_code)] File);

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock, Failure> {
        let path = dir.join("lock");
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        file.try_lock()
            .map_err(|_| Failure::Usage(format!("{} is in use by another process", dir.display())))?;
        Ok(DirLock(file))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn origin(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn summary_text(s: &SystemSummary) -> String {
    format!(
        "{} ({}): {} groups, {} users, {} schemas, {} records",
        s.tenant, s.system_name, s.groups, s.users, s.schemas, s.records
    )
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
    tracing::info!("shutting down");
}

pub async fn serve(ctx: &Context) -> Result<(), Failure> {
    let (store, _lock) = ctx.store()?;
    let listener = tokio::net::TcpListener::bind(ctx.config.listen)
        .await
        .map_err(|e| Failure::Usage(format!("cannot listen on {}: {e}", ctx.config.listen)))?;
    let addr = listener.local_addr().map_err(|e| Failure::Usage(e.to_string()))?;
    if ctx.config.admin_token.is_none() {
        tracing::warn!("no admin token configured; tenant administration routes are disabled");
    }
    ctx.emit(format!("listening on http://{addr}"), json!({ "listening": addr.to_string() }));
    reta_server::serve(listener, store, &ctx.config, shutdown_signal())
        .await
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn report_failure(ctx: &Context, file: &Path, report: &ValidationReport) -> Failure {
    let name = file.display();
    let lines: Vec<String> = report.iter().map(|d| format!("{name}:{d}")).collect();
    ctx.emit(lines.join("\n"), json!({ "valid": false, "diagnostics": report.iter().collect::<Vec<_>>() }));
    Failure::Domain(format!("{}: {} problem(s)", name, report.len()))
}

fn parse_failure(ctx: &Context, file: &Path, err: Error) -> Failure {
    if let Error::Parse(errors) = &err {
        let name = file.display();
        let lines: Vec<String> = errors.0.iter().map(|e| format!("{name}:{}:{}: {}", e.row, e.column, e.message)).collect();
        ctx.emit(lines.join("\n"), json!({ "valid": false, "parse_errors": errors.0 }));
        return Failure::Domain(format!("{name}: {} parse error(s)", errors.0.len()));
    }
    err.into()
}

pub async fn validate(ctx: &Context, file: &Path) -> Result<(), Failure> {
    let bytes = read_file(file)?;
    if let Some(client) = ctx.client(None)? {
        let report = client.dry_run(bytes, &origin(file)).await?;
        let valid = report["valid"].as_bool().unwrap_or(false);
        let mut lines: Vec<String> = Vec::new();
        for key in ["parse_errors", "diagnostics"] {
            for d in report[key].as_array().into_iter().flatten() {
                lines.push(format!("{}:{}:{}: {}", file.display(), d["row"], d["column"], d["message"].as_str().unwrap_or("")));
            }
        }
        let text = if valid { format!("{}: valid", file.display()) } else { lines.join("\n") };
        ctx.emit(text, report);
        return if valid { Ok(()) } else { Err(Failure::Domain(format!("{}: invalid", file.display()))) };
    }
    let (reta, report) = match load_metadata(&bytes, &origin(file)) {
        Ok(loaded) => loaded,
        Err(e) => return Err(parse_failure(ctx, file, e)),
    };
    if !report.is_empty() {
        return Err(report_failure(ctx, file, &report));
    }
    let text = format!(
        "{}: valid (tenant {}, {} groups, {} users, {} schemas)",
        file.display(),
        reta.tenant.id.text,
        reta.groups.len(),
        reta.users.len(),
        reta.schemas.len()
    );
    ctx.emit(text, json!({ "valid": true, "tenant": reta.tenant.id.text }));
    Ok(())
}

pub async fn instantiate(ctx: &Context, file: &Path, mode: Mode) -> Result<(), Failure> {
    let bytes = read_file(file)?;
    let (reta, report) = match load_metadata(&bytes, &origin(file)) {
        Ok(loaded) => loaded,
        Err(e) => return Err(parse_failure(ctx, file, e)),
    };
    if !report.is_empty() {
        return Err(report_failure(ctx, file, &report));
    }
    let summary = match ctx.client(ctx.token.as_deref())? {
        Some(mut client) => {
            if mode == Mode::Replace && ctx.token.is_none() {
                // the table carries the tenant's own credentials
                client.login_tenant(&reta.tenant.id.text, &reta.tenant.password.text).await?;
            }
            client.upload_reta(bytes, &origin(file), mode).await?
        }
        None => {
            let (store, _lock) = ctx.store()?;
            let summary = store.instantiate(&reta, mode)?;
            store.flush()?;
            summary
        }
    };
    let verb = match mode {
        Mode::Create => "created",
        Mode::Replace => "replaced",
    };
    ctx.emit(format!("{verb} {}", summary_text(&summary)), json!(summary));
    Ok(())
}

/// Remote data commands act on the token's own tenant only.
async fn remote_for(ctx: &Context, tenant: &str) -> Result<Option<Client>, Failure> {
    let Some(client) = ctx.client(ctx.token.as_deref())? else { return Ok(None) };
    if ctx.token.is_none() {
        return Err(Failure::Usage("--server requires --token (or RETA_TOKEN)".into()));
    }
    match client.whoami().await? {
        Principal::Tenant { tenant: own } | Principal::User { tenant: own, .. } if own == tenant => Ok(Some(client)),
        _ => Err(Failure::Domain(format!("cross-tenant: the token does not belong to tenant {tenant:?}"))),
    }
}

pub async fn import(ctx: &Context, tenant: &str, schema: &str, file: &Path, atomic: bool) -> Result<(), Failure> {
    let bytes = read_file(file)?;
    let outcome: ImportOutcome = match remote_for(ctx, tenant).await? {
        Some(client) => client.import(schema, bytes, &origin(file), atomic).await?,
        None => {
            let doc = TabularDocument::from_bytes(&bytes, &origin(file))?;
            let (store, _lock) = ctx.store()?;
            let outcome = store.import(tenant, schema, &doc, atomic)?;
            store.flush()?;
            outcome
        }
    };
    let mut text = format!("imported {} record(s) into {tenant}/{schema}", outcome.inserted);
    for issue in &outcome.rejected {
        text.push_str(&format!("\n{}: {issue}", file.display()));
    }
    ctx.emit(text, json!(outcome));
    Ok(())
}

pub async fn export(ctx: &Context, tenant: &str, schema: &str, out: Option<&Path>) -> Result<(), Failure> {
    let bytes = match remote_for(ctx, tenant).await? {
        Some(client) => client.export(schema).await?,
        None => {
            let (store, _lock) = ctx.store()?;
            store.export(tenant, schema)?.to_csv()
        }
    };
    match out {
        Some(path) => {
            std::fs::write(path, &bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            ctx.emit(format!("wrote {}", path.display()), json!({ "written": path, "bytes": bytes.len() }));
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::Usage(e.to_string()))?,
    }
    Ok(())
}

fn admin_client(ctx: &Context) -> Result<Option<Client>, Failure> {
    let token = ctx.token.as_deref().or(ctx.config.admin_token.as_deref());
    if ctx.server.is_some() && token.is_none() {
        return Err(Failure::Usage("--server requires an admin token (RETA_ADMIN_TOKEN or --token)".into()));
    }
    ctx.client(token)
}

pub async fn admin_list(ctx: &Context) -> Result<(), Failure> {
    let summaries = match admin_client(ctx)? {
        Some(client) => client.list_systems().await?,
        None => {
            let (store, _lock) = ctx.store()?;
            store
                .tenants()
                .iter()
                .map(|t| store.read(t, |s| s.summary()))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let text = if summaries.is_empty() {
        "no tenants".to_string()
    } else {
        summaries.iter().map(summary_text).collect::<Vec<_>>().join("\n")
    };
    ctx.emit(text, json!(summaries));
    Ok(())
}

pub async fn admin_show(ctx: &Context, tenant: &str) -> Result<(), Failure> {
    let summary = match admin_client(ctx)? {
        Some(client) => client.system(tenant).await?,
        None => {
            let (store, _lock) = ctx.store()?;
            store.read(tenant, |s| s.summary())?
        }
    };
    ctx.emit(summary_text(&summary), json!(summary));
    Ok(())
}

pub async fn admin_delete(ctx: &Context, tenant: &str) -> Result<(), Failure> {
    match admin_client(ctx)? {
        Some(client) => client.delete_system(tenant).await?,
        None => {
            let (store, _lock) = ctx.store()?;
            store.delete_system(tenant)?;
        }
    }
    ctx.emit(format!("deleted {tenant}"), json!({ "deleted": tenant }));
    Ok(())
}
