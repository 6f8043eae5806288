//! Pluggable data sources.
//!
//! A source is one of three kinds: a historical loader, a real-time stream,
//! or a places catalog. Each source names a driver; drivers are looked up
//! in a [`DriverRegistry`] by `(kind, name)`, so adding a new integration
//! means registering one driver.

mod bootstrap;
mod config;
mod csv_file;
mod http_json;
mod places;
mod replay;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::csvio::CsvError;
use crate::model::{Place, PlaceError, Sample};
use crate::time::Timestamp;

pub use bootstrap::{build_store, fetch_all_places, preload_historical, BootstrapError};
pub use config::{load_config, parse_config, AppConfig, ConfigError, ServiceConfig};
pub use csv_file::CsvFileDriver;
pub use http_json::HttpJsonDriver;
pub use places::{GeoJsonFileDriver, HttpGeoJsonDriver};
pub use replay::ReplayDriver;
pub use synthetic::SyntheticDriver;

/// Fallback staleness when a source declares neither staleness nor cadence.
pub const DEFAULT_STALENESS_SECS: i64 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Historical,
    Realtime,
    Places,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Historical => "historical",
            SourceKind::Realtime => "realtime",
            SourceKind::Places => "places",
        })
    }
}

/// A configured source instance.
#[derive(Clone, PartialEq)]
pub struct SourceDescriptor {
    pub name: String,
    pub kind: SourceKind,
    pub driver: String,
    pub params: BTreeMap<String, String>,
    pub metrics: Vec<String>,
    pub staleness_secs: Option<i64>,
}

const SECRET_MARKERS: [&str; 6] = ["password", "passwd", "secret", "token", "key", "credential"];

/// True for parameter names whose values must never be logged.
pub fn is_secret_param(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    SECRET_MARKERS.iter().any(|m| lower.contains(m))
}

impl SourceDescriptor {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.params.get(name).map(String::as_str)
    }

    pub fn require(&self, name: &str) -> Result<&str, ConnectorError> {
        self.param(name).ok_or_else(|| ConnectorError::Param {
            source_name: self.name.clone(),
            param: name.to_string(),
            message: "required parameter is missing".into(),
        })
    }

    /// Parses an optional parameter, falling back to `default`.
    pub fn parsed<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T, ConnectorError> {
        match self.param(name) {
            None => Ok(default),
            Some(raw) => raw.trim().parse().map_err(|_| ConnectorError::Param {
                source_name: self.name.clone(),
                param: name.to_string(),
                message: if is_secret_param(name) { "invalid value".into() } else { format!("invalid value {raw:?}") },
            }),
        }
    }

    pub fn cadence_secs(&self) -> Option<i64> {
        self.param("cadence_secs").and_then(|c| c.trim().parse().ok()).filter(|&c: &i64| c > 0)
    }

    /// How long a sample from this source stays on the map: explicit
    /// setting, else twice the cadence, else [`DEFAULT_STALENESS_SECS`].
    pub fn effective_staleness(&self) -> i64 {
        self.staleness_secs
            .or_else(|| self.cadence_secs().map(|c| 2 * c))
            .unwrap_or(DEFAULT_STALENESS_SECS)
    }

    /// Params with secret values replaced by `***`.
    pub fn redacted_params(&self) -> BTreeMap<String, String> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), if is_secret_param(k) { "***".to_string() } else { v.clone() }))
            .collect()
    }
}

impl fmt::Debug for SourceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceDescriptor")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("driver", &self.driver)
            .field("params", &self.redacted_params())
            .field("metrics", &self.metrics)
            .field("staleness_secs", &self.staleness_secs)
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum ConnectorError {
    #[error("unknown driver {0:?}")]
    UnknownDriver(String),
    #[error("driver {driver:?} does not provide {kind} sources")]
    WrongKind { driver: String, kind: SourceKind },
    #[error("source {source_name:?}: parameter {param:?}: {message}")]
    Param { source_name: String, param: String, message: String },
    #[error("source {source_name:?}: I/O error: {message}")]
    Io { source_name: String, message: String },
    #[error("source {source_name:?}: {source}")]
    Csv { source_name: String, source: CsvError },
    #[error("source {source_name:?}: request failed: {message}")]
    Http { source_name: String, message: String },
    #[error("source {source_name:?}: schema mismatch: {message}")]
    Schema { source_name: String, message: String },
    #[error("source {source_name:?}: {source}")]
    Places { source_name: String, source: PlaceError },
}

/// All samples sharing one timestamp, delivered together on a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub t: Timestamp,
    pub samples: Vec<Sample>,
}

/// Groups samples into batches of equal timestamp, ordered by time. Samples
/// keep their relative order within a batch.
pub fn batch_by_time(mut samples: Vec<Sample>) -> Vec<SampleBatch> {
    samples.sort_by_key(|s| s.t);
    let mut out: Vec<SampleBatch> = Vec::new();
    for s in samples {
        match out.last_mut() {
            Some(b) if b.t == s.t => b.samples.push(s),
            _ => out.push(SampleBatch { t: s.t, samples: vec![s] }),
        }
    }
    out
}

/// Receiving end of a real-time source. `None` from [`SampleStream::next`]
/// means the stream ended; a source failure arrives as one `Err` item
/// followed by the end of the stream.
pub struct SampleStream {
    rx: mpsc::Receiver<Result<SampleBatch, ConnectorError>>,
}

impl SampleStream {
    pub fn new(rx: mpsc::Receiver<Result<SampleBatch, ConnectorError>>) -> Self {
        SampleStream { rx }
    }

    pub async fn next(&mut self) -> Option<Result<SampleBatch, ConnectorError>> {
        self.rx.recv().await
    }

    /// Drains the stream to the end, stopping at the first error.
    pub async fn collect(mut self) -> Result<Vec<SampleBatch>, ConnectorError> {
        let mut out = Vec::new();
        while let Some(item) = self.next().await {
            out.push(item?);
        }
        Ok(out)
    }
}

/// Shared metadata of every driver.
pub trait Driver: Send + Sync {
    fn name(&self) -> &'static str;
    /// Parameters that must be present for a source of `kind`.
    fn required_params(&self, kind: SourceKind) -> &'static [&'static str];
}

#[async_trait]
pub trait HistoricalDriver: Driver {
    async fn load(
        &self,
        source: &SourceDescriptor,
        metric_ids: &[String],
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<Sample>, ConnectorError>;
}

pub trait RealtimeDriver: Driver {
    /// Starts producing batches on the current tokio runtime.
    fn subscribe(&self, source: &SourceDescriptor) -> Result<SampleStream, ConnectorError>;
}

#[async_trait]
pub trait PlacesDriver: Driver {
    async fn fetch(&self, source: &SourceDescriptor) -> Result<Vec<Place>, ConnectorError>;
}

/// Drivers keyed by name, per source kind.
#[derive(Clone, Default)]
pub struct DriverRegistry {
    historical: HashMap<String, Arc<dyn HistoricalDriver>>,
    realtime: HashMap<String, Arc<dyn RealtimeDriver>>,
    places: HashMap<String, Arc<dyn PlacesDriver>>,
}

impl DriverRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with every driver shipped in this crate.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register_historical(Arc::new(CsvFileDriver));
        r.register_historical(Arc::new(HttpJsonDriver));
        r.register_realtime(Arc::new(HttpJsonDriver));
        r.register_realtime(Arc::new(ReplayDriver));
        r.register_realtime(Arc::new(SyntheticDriver));
        r.register_places(Arc::new(GeoJsonFileDriver));
        r.register_places(Arc::new(HttpGeoJsonDriver));
        r
    }

    pub fn register_historical(&mut self, d: Arc<dyn HistoricalDriver>) {
        self.historical.insert(d.name().to_string(), d);
    }

    pub fn register_realtime(&mut self, d: Arc<dyn RealtimeDriver>) {
        self.realtime.insert(d.name().to_string(), d);
    }

    pub fn register_places(&mut self, d: Arc<dyn PlacesDriver>) {
        self.places.insert(d.name().to_string(), d);
    }

    pub fn is_known(&self, driver: &str) -> bool {
        self.historical.contains_key(driver) || self.realtime.contains_key(driver) || self.places.contains_key(driver)
    }

    /// Checks the driver exists for the kind and returns its required params.
    pub fn required_params(&self, kind: SourceKind, driver: &str) -> Result<&'static [&'static str], ConnectorError> {
        let d: Option<&dyn Driver> = match kind {
            SourceKind::Historical => self.historical.get(driver).map(|d| d.as_ref() as &dyn Driver),
            SourceKind::Realtime => self.realtime.get(driver).map(|d| d.as_ref() as &dyn Driver),
            SourceKind::Places => self.places.get(driver).map(|d| d.as_ref() as &dyn Driver),
        };
        match d {
            Some(d) => Ok(d.required_params(kind)),
            None if self.is_known(driver) => Err(ConnectorError::WrongKind { driver: driver.to_string(), kind }),
            None => Err(ConnectorError::UnknownDriver(driver.to_string())),
        }
    }

    fn check(&self, source: &SourceDescriptor, kind: SourceKind) -> Result<(), ConnectorError> {
        if source.kind != kind {
            return Err(ConnectorError::WrongKind { driver: source.driver.clone(), kind });
        }
        for p in self.required_params(kind, &source.driver)? {
            source.require(p)?;
        }
        Ok(())
    }

    /// Samples of `metric_ids` inside `[from, to]` from a historical source.
    pub async fn historical_load(
        &self,
        source: &SourceDescriptor,
        metric_ids: &[String],
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<Sample>, ConnectorError> {
        self.check(source, SourceKind::Historical)?;
        let driver = &self.historical[&source.driver];
        let mut samples = driver.load(source, metric_ids, from, to).await?;
        samples.retain(|s| s.t >= from && s.t <= to && metric_ids.contains(&s.metric_id));
        Ok(samples)
    }

    pub fn realtime_subscribe(&self, source: &SourceDescriptor) -> Result<SampleStream, ConnectorError> {
        self.check(source, SourceKind::Realtime)?;
        self.realtime[&source.driver].subscribe(source)
    }

    pub async fn places_fetch(&self, source: &SourceDescriptor) -> Result<Vec<Place>, ConnectorError> {
        self.check(source, SourceKind::Places)?;
        self.places[&source.driver].fetch(source).await
    }
}

/// Parses the `speed` parameter: a positive factor, or `max` for no pacing.
pub(crate) fn parse_speed(source: &SourceDescriptor, default: Option<f64>) -> Result<Option<f64>, ConnectorError> {
    let bad = |raw: &str| ConnectorError::Param {
        source_name: source.name.clone(),
        param: "speed".into(),
        message: format!("expected a positive factor or \"max\", got {raw:?}"),
    };
    match source.param("speed").map(str::trim) {
        None => Ok(default),
        Some("max") => Ok(None),
        Some(raw) => {
            let v: f64 = raw.parse().map_err(|_| bad(raw))?;
            if v > 0.0 && v.is_finite() {
                Ok(Some(v))
            } else {
                Err(bad(raw))
            }
        }
    }
}

/// Emits batches on a channel, pacing them by their timestamp gaps divided
/// by `speed` (no pacing when `speed` is `None`). The first batch goes out
/// after `start_delay`.
pub(crate) fn spawn_paced(
    batches: Vec<SampleBatch>,
    speed: Option<f64>,
    start_delay: std::time::Duration,
) -> SampleStream {
    let (tx, rx) = mpsc::channel(64);
    tokio::spawn(async move {
        let start = tokio::time::Instant::now() + start_delay;
        let t0 = batches.first().map(|b| b.t.unix()).unwrap_or(0);
        for batch in batches {
            let offset = match speed {
                Some(s) => std::time::Duration::from_secs_f64((batch.t.unix() - t0) as f64 / s),
                None => std::time::Duration::ZERO,
            };
            tokio::time::sleep_until(start + offset).await;
            if tx.send(Ok(batch)).await.is_err() {
                return;
            }
        }
    });
    SampleStream::new(rx)
}
