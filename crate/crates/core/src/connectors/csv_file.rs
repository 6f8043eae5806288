use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use async_trait::async_trait;

use super::{ConnectorError, Driver, HistoricalDriver, SourceDescriptor, SourceKind};
use crate::csvio;
use crate::model::Sample;
use crate::time::Timestamp;

/// Reads every sample of a sample-CSV file.
pub(crate) fn read_csv_source(source: &SourceDescriptor) -> Result<Vec<Sample>, ConnectorError> {
    let path = Path::new(source.require("path")?);
    let file = File::open(path).map_err(|e| ConnectorError::Io {
        source_name: source.name.clone(),
        message: format!("{}: {e}", path.display()),
    })?;
    csvio::read_samples(BufReader::new(file)).map_err(|e| ConnectorError::Csv { source_name: source.name.clone(), source: e })
}

/// Historical loader over a sample CSV file (`path`).
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvFileDriver;

impl Driver for CsvFileDriver {
    fn name(&self) -> &'static str {
        "csv-file"
    }

    fn required_params(&self, _kind: SourceKind) -> &'static [&'static str] {
        &["path"]
    }
}

#[async_trait]
impl HistoricalDriver for CsvFileDriver {
    async fn load(
        &self,
        source: &SourceDescriptor,
        metric_ids: &[String],
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<Sample>, ConnectorError> {
        let owned = source.clone();
        let mut samples = tokio::task::spawn_blocking(move || read_csv_source(&owned))
            .await
            .map_err(|e| ConnectorError::Io { source_name: source.name.clone(), message: e.to_string() })??;
        samples.retain(|s| s.t >= from && s.t <= to && metric_ids.contains(&s.metric_id));
        Ok(samples)
    }
}
