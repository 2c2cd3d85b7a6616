//! Layered configuration: built-in defaults, then environment, then the
//! config file, then command-line flags.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use reta_server::ServerConfig;
use toml::{Table, Value};

pub const DEFAULT_DATA_DIR: &str = "reta-data";

/// Values given on the command line; `None` means not given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub listen: Option<SocketAddr>,
    pub ui_dir: Option<PathBuf>,
}

/// Environment variables the configuration reads.
pub const ENV_DATA_DIR: &str = "RETA_DATA_DIR";
pub const ENV_LISTEN: &str = "RETA_LISTEN";
pub const ENV_ADMIN_TOKEN: &str = "RETA_ADMIN_TOKEN";

pub fn resolve(
    file: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
    flags: &Overrides,
) -> Result<ServerConfig, String> {
    let mut merged = Table::new();
    merged.insert("data_dir".into(), Value::String(DEFAULT_DATA_DIR.into()));
    for (var, key) in [(ENV_DATA_DIR, "data_dir"), (ENV_LISTEN, "listen"), (ENV_ADMIN_TOKEN, "admin_token")] {
        if let Some(v) = env(var).filter(|v| !v.is_empty()) {
            merged.insert(key.into(), Value::String(v));
        }
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let table: Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
        merged.extend(table);
    }
    let path_value = |p: &PathBuf| Value::String(p.to_string_lossy().into_owned());
    if let Some(dir) = &flags.data_dir {
        merged.insert("data_dir".into(), path_value(dir));
    }
    if let Some(addr) = flags.listen {
        merged.insert("listen".into(), Value::String(addr.to_string()));
    }
    if let Some(dir) = &flags.ui_dir {
        merged.insert("ui_dir".into(), path_value(dir));
    }
    let origin = file.map_or_else(|| "configuration".to_string(), |p| p.display().to_string());
    Value::Table(merged).try_into::<ServerConfig>().map_err(|e| format!("{origin}: {e}"))
}
