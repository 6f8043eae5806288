use std::net::SocketAddr;
use std::sync::Arc;

use crowdlens_core::connectors::{build_store, AppConfig, BootstrapError, ConnectorError, DriverRegistry};
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::api::{router, AppState};
use crate::ingest::spawn_realtime;
use crate::keystore::{KeyStore, KeyStoreError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error("auth store: {0}")]
    Keys(#[from] KeyStoreError),
    #[error("realtime: {0}")]
    Realtime(#[from] ConnectorError),
    #[error("bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot: {0}")]
    Snapshot(#[from] crowdlens_core::store::StoreError),
}

/// A listening server. Realtime ingestion is started separately so that
/// callers can attach stream subscribers first.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: AppState,
    config: AppConfig,
    shutdown: Option<oneshot::Sender<()>>,
    server: JoinHandle<std::io::Result<()>>,
    ingest: Vec<JoinHandle<()>>,
}

/// Builds the store (snapshot, then historical preload), opens the auth
/// store and starts serving on the configured address.
pub async fn start(config: &AppConfig, registry: &DriverRegistry) -> Result<RunningServer, ServeError> {
    let store = build_store(config, registry, true).await?;
    let stats = store.stats();
    tracing::info!(samples = stats.sample_count, places = stats.place_count, metrics = stats.metric_count, "store ready");
    let keys = Arc::new(KeyStore::open(&config.service.auth_store)?);
    let state = AppState::new(store, keys, config);
    start_with_state(config, state).await
}

pub async fn start_with_state(config: &AppConfig, state: AppState) -> Result<RunningServer, ServeError> {
    let listener = tokio::net::TcpListener::bind(&config.service.bind)
        .await
        .map_err(|e| ServeError::Bind { addr: config.service.bind.clone(), message: e.to_string() })?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    let (tx, rx) = oneshot::channel::<()>();
    let hub = state.hub.clone();
    let app = router(state.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
                // Open streams never end on their own.
                hub.close();
            })
            .await
    });
    Ok(RunningServer { addr, state, config: config.clone(), shutdown: Some(tx), server, ingest: Vec::new() })
}

impl RunningServer {
    pub fn start_ingest(&mut self, registry: &DriverRegistry) -> Result<(), ServeError> {
        self.ingest.extend(spawn_realtime(&self.config, registry, &self.state)?);
        Ok(())
    }

    /// Resolves once every realtime source has ended.
    pub async fn ingest_finished(&mut self) {
        for h in self.ingest.drain(..) {
            let _ = h.await;
        }
    }

    /// Stops ingestion, closes streams, drains connections, and writes the
    /// snapshot if one is configured.
    pub async fn shutdown(mut self) -> Result<(), ServeError> {
        for h in &self.ingest {
            h.abort();
        }
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match (&mut self.server).await {
            Ok(r) => r?,
            Err(e) if e.is_cancelled() => {}
            Err(e) => return Err(std::io::Error::other(e).into()),
        }
        if let Some(path) = &self.config.service.snapshot {
            let stats = self.state.store.snapshot_save(path)?;
            tracing::info!(path = %path.display(), samples = stats.sample_count, "snapshot written");
        }
        Ok(())
    }
}
