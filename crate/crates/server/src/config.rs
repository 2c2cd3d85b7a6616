use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Where tenant data lives. `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Bearer credential of the platform administrator. Without one the
    /// administrator routes are unreachable.
    pub admin_token: Option<String>,
    /// Session lifetime in seconds.
    pub session_ttl_secs: u64,
    /// Largest accepted request body, in bytes.
    pub max_upload_bytes: usize,
    /// Static assets served under `/ui`.
    pub ui_dir: Option<PathBuf>,
    /// fsync every write.
    pub sync_writes: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: DEFAULT_LISTEN.parse().expect("valid default address"),
            data_dir: None,
            admin_token: None,
            session_ttl_secs: 24 * 60 * 60,
            max_upload_bytes: 16 * 1024 * 1024,
            ui_dir: None,
            sync_writes: false,
        }
    }
}

impl ServerConfig {
    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
