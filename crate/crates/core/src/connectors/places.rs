use std::path::Path;

use async_trait::async_trait;
use serde_json::Value;

use super::{ConnectorError, Driver, PlacesDriver, SourceDescriptor, SourceKind};
use crate::model::{validate_places, Place};

fn validate(source: &SourceDescriptor, doc: &Value) -> Result<Vec<Place>, ConnectorError> {
    validate_places(doc).map_err(|e| ConnectorError::Places { source_name: source.name.clone(), source: e })
}

/// Places catalog from a GeoJSON file (`path`).
#[derive(Debug, Clone, Copy, Default)]
pub struct GeoJsonFileDriver;

impl Driver for GeoJsonFileDriver {
    fn name(&self) -> &'static str {
        "geojson-file"
    }

    fn required_params(&self, _kind: SourceKind) -> &'static [&'static str] {
        &["path"]
    }
}

#[async_trait]
impl PlacesDriver for GeoJsonFileDriver {
    async fn fetch(&self, source: &SourceDescriptor) -> Result<Vec<Place>, ConnectorError> {
        let path = Path::new(source.require("path")?);
        let io = |message: String| ConnectorError::Io { source_name: source.name.clone(), message };
        let text = tokio::fs::read_to_string(path).await.map_err(|e| io(format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| io(format!("{}: invalid JSON: {e}", path.display())))?;
        validate(source, &doc)
    }
}

/// Places catalog fetched with GET from `url` (optional bearer `token`).
#[derive(Debug, Clone, Copy, Default)]
pub struct HttpGeoJsonDriver;

impl Driver for HttpGeoJsonDriver {
    fn name(&self) -> &'static str {
        "http-geojson"
    }

    fn required_params(&self, _kind: SourceKind) -> &'static [&'static str] {
        &["url"]
    }
}

#[async_trait]
impl PlacesDriver for HttpGeoJsonDriver {
    async fn fetch(&self, source: &SourceDescriptor) -> Result<Vec<Place>, ConnectorError> {
        let http = |e: reqwest::Error| ConnectorError::Http { source_name: source.name.clone(), message: e.without_url().to_string() };
        let mut req = reqwest::Client::new().get(source.require("url")?);
        if let Some(token) = source.param("token") {
            req = req.bearer_auth(token);
        }
        let doc: Value = req.send().await.map_err(http)?.error_for_status().map_err(http)?.json().await.map_err(http)?;
        validate(source, &doc)
    }
}
