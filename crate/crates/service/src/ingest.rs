//! Realtime sources into the store, then out to stream subscribers.

use std::collections::BTreeSet;

use crowdlens_core::connectors::{AppConfig, ConnectorError, DriverRegistry, SampleBatch, SampleStream, SourceKind};
use crowdlens_core::store::StoreError;
use tokio::task::JoinHandle;

use crate::api::{live_frame, AppState};

/// Upserts one batch and publishes a fresh frame at the batch time for
/// every metric it touches (its base metrics and their dependents) that
/// has subscribers. Returns the number of samples written.
pub fn ingest_batch(state: &AppState, batch: &SampleBatch) -> Result<usize, StoreError> {
    let n = state.store.upsert(&batch.samples)?;
    let cat = state.store.catalog();
    let mut affected = BTreeSet::new();
    for s in &batch.samples {
        if let Some(m) = cat.metric_idx(&s.metric_id) {
            if affected.insert(m) {
                affected.extend(cat.dependents_of(m));
            }
        }
    }
    for m in affected {
        let id = &cat.metrics()[m].id;
        if state.hub.subscriber_count(id) == 0 {
            continue;
        }
        match live_frame(state, id, batch.t) {
            Ok(frame) => {
                state.hub.publish(frame);
            }
            Err(e) => tracing::warn!(metric = %id, error = %e, "frame not published"),
        }
    }
    Ok(n)
}

async fn pump(name: String, mut stream: SampleStream, state: AppState) {
    let mut batches = 0usize;
    while let Some(item) = stream.next().await {
        match item {
            Ok(batch) => match ingest_batch(&state, &batch) {
                Ok(_) => batches += 1,
                Err(e) => tracing::warn!(source = %name, t = %batch.t, error = %e, "batch rejected"),
            },
            Err(e) => {
                tracing::error!(source = %name, error = %e, "realtime source failed");
                return;
            }
        }
    }
    tracing::info!(source = %name, batches, "realtime source finished");
}

/// Subscribes to every realtime source in `config` and spawns a task per
/// source. Nothing is spawned unless every subscription succeeds.
pub fn spawn_realtime(config: &AppConfig, registry: &DriverRegistry, state: &AppState) -> Result<Vec<JoinHandle<()>>, ConnectorError> {
    let streams = config
        .sources_of(SourceKind::Realtime)
        .map(|s| registry.realtime_subscribe(s).map(|st| (s.name.clone(), st)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(streams
        .into_iter()
        .map(|(name, stream)| {
            tracing::info!(source = %name, "realtime source subscribed");
            tokio::spawn(pump(name, stream, state.clone()))
        })
        .collect())
}
