//! Service configuration file (TOML).
//!
//! ```toml
//! [service]
//! bind = "127.0.0.1:8080"
//! auth_store = "keys.json"
//! snapshot = "store.csv"          # optional
//!
//! [[metrics]]
//! id = "roaming"
//! label = "Roaming devices"
//! unit = "devices"
//! cap = 400
//!
//! [[metrics]]
//! id = "density"
//! label = "Roaming density"
//! unit = "persons/capacity"
//! cap = 1.5
//! expr = "roaming / capacity"
//!
//! [[sources]]
//! name = "cells"
//! kind = "places"
//! driver = "geojson-file"
//! params = { path = "places.geojson" }
//!
//! [[sources]]
//! name = "history"
//! kind = "historical"
//! driver = "csv-file"
//! metrics = ["roaming"]
//! params = { path = "samples.csv", cadence_secs = 300 }
//! ```
//!
//! Relative `path` parameters resolve against the config file's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{DriverRegistry, SourceDescriptor, SourceKind};
use crate::catalog::Catalog;
use crate::expr::{resolve_metric_graph, GraphError};
use crate::model::{MetricDef, MetricKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("metrics: {0}")]
    Metrics(#[from] GraphError),
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { location: location.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: String,
    pub auth_store: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub heartbeat_secs: u64,
    /// Frames buffered per subscriber before a slow client is disconnected.
    pub stream_buffer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub sources: Vec<SourceDescriptor>,
    pub metric_defs: Vec<MetricDef>,
    pub service: ServiceConfig,
    /// Metric ids in dependency order.
    pub evaluation_order: Vec<String>,
    pub base_dir: PathBuf,
}

impl AppConfig {
    pub fn source(&self, name: &str) -> Option<&SourceDescriptor> {
        self.sources.iter().find(|s| s.name == name)
    }

    pub fn sources_of(&self, kind: SourceKind) -> impl Iterator<Item = &SourceDescriptor> {
        self.sources.iter().filter(move |s| s.kind == kind)
    }

    /// Staleness for a metric: the largest effective staleness among the
    /// sources supplying any of its base inputs.
    pub fn staleness_for(&self, catalog: &Catalog, metric_id: &str) -> i64 {
        let bases: Vec<&str> = catalog
            .metric_idx(metric_id)
            .map(|m| catalog.base_dependencies(m).iter().map(|&b| catalog.metrics()[b].id.as_str()).collect())
            .unwrap_or_default();
        self.sources
            .iter()
            .filter(|s| s.kind != SourceKind::Places && s.metrics.iter().any(|m| bases.contains(&m.as_str())))
            .map(SourceDescriptor::effective_staleness)
            .max()
            .unwrap_or(super::DEFAULT_STALENESS_SECS)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    service: Option<RawService>,
    #[serde(default)]
    metrics: Vec<RawMetric>,
    #[serde(default)]
    sources: Vec<RawSource>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawService {
    bind: Option<String>,
    auth_store: Option<String>,
    snapshot: Option<String>,
    heartbeat_secs: Option<u64>,
    stream_buffer: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    id: String,
    label: Option<String>,
    unit: Option<String>,
    cap: f64,
    expr: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    name: String,
    kind: SourceKind,
    driver: String,
    #[serde(default)]
    params: BTreeMap<String, toml::Value>,
    #[serde(default)]
    metrics: Vec<String>,
    staleness_secs: Option<i64>,
}

fn param_to_string(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Datetime(d) => Some(d.to_string()),
        toml::Value::Array(items) => {
            items.iter().map(param_to_string).collect::<Option<Vec<_>>>().map(|v| v.join(","))
        }
        toml::Value::Table(_) => None,
    }
}

fn resolve_path(base_dir: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

/// Reads and fully validates a config file. Nothing is returned unless
/// every check passes.
pub fn load_config(path: &Path, registry: &DriverRegistry) -> Result<AppConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base_dir, registry)
}

pub fn parse_config(text: &str, base_dir: &Path, registry: &DriverRegistry) -> Result<AppConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let metric_defs: Vec<MetricDef> = raw
        .metrics
        .into_iter()
        .map(|m| MetricDef {
            label: m.label.unwrap_or_else(|| m.id.clone()),
            unit: m.unit.unwrap_or_default(),
            id: m.id,
            cap: m.cap,
            kind: match m.expr {
                Some(expr) => MetricKind::Derived { expr },
                None => MetricKind::Base,
            },
        })
        .collect();
    for (i, m) in metric_defs.iter().enumerate() {
        if !m.cap.is_finite() || m.cap <= 0.0 {
            return Err(invalid(format!("metrics[{i}] ({:?})", m.id), format!("cap must be positive (got {})", m.cap)));
        }
    }
    let evaluation_order = resolve_metric_graph(&metric_defs)?;

    let mut names = HashSet::new();
    let mut sources = Vec::with_capacity(raw.sources.len());
    for (i, s) in raw.sources.into_iter().enumerate() {
        let loc = format!("sources[{i}] ({:?})", s.name);
        if s.name.is_empty() {
            return Err(invalid(loc, "name must not be empty"));
        }
        if !names.insert(s.name.clone()) {
            return Err(invalid(loc, "duplicate source name"));
        }
        let required = registry.required_params(s.kind, &s.driver).map_err(|e| invalid(&loc, e.to_string()))?;
        let mut params = BTreeMap::new();
        for (k, v) in &s.params {
            let value = param_to_string(v).ok_or_else(|| invalid(&loc, format!("parameter {k:?} must be a scalar or list")))?;
            let value = if k == "path" { resolve_path(base_dir, &value).display().to_string() } else { value };
            params.insert(k.clone(), value);
        }
        for p in required {
            if !params.contains_key(*p) {
                return Err(invalid(&loc, format!("missing required parameter {p:?} for driver {:?}", s.driver)));
            }
        }
        for m in &s.metrics {
            match metric_defs.iter().find(|d| &d.id == m) {
                None => return Err(invalid(&loc, format!("metric {m:?} is not declared under [[metrics]]"))),
                Some(d) if !d.is_base() => {
                    return Err(invalid(&loc, format!("metric {m:?} is derived; sources supply base metrics only")))
                }
                Some(_) => {}
            }
        }
        if s.kind != SourceKind::Places && s.metrics.is_empty() {
            return Err(invalid(&loc, "a data source must list the metrics it supplies"));
        }
        if let Some(st) = s.staleness_secs {
            if st <= 0 {
                return Err(invalid(&loc, "staleness_secs must be positive"));
            }
        }
        let desc = SourceDescriptor {
            name: s.name,
            kind: s.kind,
            driver: s.driver,
            params,
            metrics: s.metrics,
            staleness_secs: s.staleness_secs,
        };
        if let Some(c) = desc.param("cadence_secs") {
            if desc.cadence_secs().is_none() {
                return Err(invalid(&loc, format!("cadence_secs must be a positive integer, got {c:?}")));
            }
        }
        sources.push(desc);
    }

    let svc = raw.service.unwrap_or(RawService {
        bind: None,
        auth_store: None,
        snapshot: None,
        heartbeat_secs: None,
        stream_buffer: None,
    });
    let service = ServiceConfig {
        bind: svc.bind.unwrap_or_else(|| "127.0.0.1:8080".into()),
        auth_store: resolve_path(base_dir, svc.auth_store.as_deref().unwrap_or("keys.json")),
        snapshot: svc.snapshot.as_deref().map(|p| resolve_path(base_dir, p)),
        heartbeat_secs: svc.heartbeat_secs.unwrap_or(15).max(1),
        stream_buffer: svc.stream_buffer.unwrap_or(256).max(1),
    };

    Ok(AppConfig { sources, metric_defs, service, evaluation_order, base_dir: base_dir.to_path_buf() })
}
