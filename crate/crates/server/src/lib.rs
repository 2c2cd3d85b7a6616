//! HTTP/JSON service over the requirements-table platform.
//!
//! Every response body is an envelope: `{"ok": true, "data": ...}` or
//! `{"ok": false, "error": {"code", "message", "details"}}`. The one exception
//! is a successful CSV export, which is returned as the file itself.

pub mod api;
pub mod auth;
mod config;
mod routes;

use std::future::Future;
use std::sync::Arc;

use axum::Router;
use reta_core::{Store, StoreOptions};
use tokio::net::TcpListener;

pub use config::{ServerConfig, DEFAULT_LISTEN};

use crate::auth::Sessions;

#[derive(Clone)]
pub(crate) struct AppState {
    pub store: Store,
    pub sessions: Arc<Sessions>,
}

/// Opens the store a configuration points at.
pub fn open_store(config: &ServerConfig) -> reta_core::Result<Store> {
    Store::with_options(StoreOptions {
        data_dir: config.data_dir.clone(),
        sync: config.sync_writes,
    })
}

/// Builds the service around an already opened store.
pub fn app(store: Store, config: &ServerConfig) -> Router {
    let state = AppState {
        store,
        sessions: Arc::new(Sessions::new(config.session_ttl(), config.admin_token.clone())),
    };
    routes::router(state, config)
}

/// Serves until `shutdown` resolves, then flushes the store.
pub async fn serve(
    listener: TcpListener,
    store: Store,
    config: &ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let router = app(store.clone(), config);
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await?;
    tokio::task::spawn_blocking(move || store.flush())
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)
}
