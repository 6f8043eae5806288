//! Building a populated store from a validated config.

use std::sync::Arc;

use thiserror::Error;
use tracing::info;

use super::{AppConfig, ConnectorError, DriverRegistry, SourceKind};
use crate::catalog::{Catalog, CatalogError};
use crate::model::Place;
use crate::store::{Store, StoreError};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Connector(#[from] ConnectorError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Places from every places source, in config order.
pub async fn fetch_all_places(config: &AppConfig, registry: &DriverRegistry) -> Result<Vec<Place>, ConnectorError> {
    let mut out = Vec::new();
    for source in config.sources_of(SourceKind::Places) {
        let places = registry.places_fetch(source).await?;
        info!(source = %source.name, count = places.len(), "places loaded");
        out.extend(places);
    }
    Ok(out)
}

/// Loads `[from, to]` from every historical source into the store.
pub async fn preload_historical(
    config: &AppConfig,
    registry: &DriverRegistry,
    store: &Store,
    from: Timestamp,
    to: Timestamp,
) -> Result<usize, BootstrapError> {
    let mut total = 0;
    for source in config.sources_of(SourceKind::Historical) {
        let samples = registry.historical_load(source, &source.metrics, from, to).await?;
        total += store.upsert(&samples)?;
        info!(source = %source.name, count = samples.len(), "historical samples loaded");
    }
    Ok(total)
}

/// Places, catalog and store for a config. The snapshot, when configured
/// and present, is loaded first; historical sources are then merged in
/// over their full range if `preload` is set.
pub async fn build_store(config: &AppConfig, registry: &DriverRegistry, preload: bool) -> Result<Arc<Store>, BootstrapError> {
    let places = fetch_all_places(config, registry).await?;
    let catalog = Catalog::new(places, config.metric_defs.clone())?;
    let store = Arc::new(Store::new(Arc::new(catalog)));
    if let Some(snapshot) = &config.service.snapshot {
        if snapshot.exists() {
            let stats = store.snapshot_load(snapshot)?;
            info!(path = %snapshot.display(), samples = stats.sample_count, "snapshot loaded");
        }
    }
    if preload {
        preload_historical(config, registry, &store, Timestamp::MIN, Timestamp::MAX).await?;
    }
    Ok(store)
}
