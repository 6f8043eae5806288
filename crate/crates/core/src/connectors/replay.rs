use std::time::Duration;

use super::csv_file::read_csv_source;
use super::{batch_by_time, parse_speed, spawn_paced, ConnectorError, Driver, RealtimeDriver, SampleStream, SourceDescriptor, SourceKind};

/// Re-emits a sample CSV as a live stream.
///
/// Params: `path`; `speed` (factor relative to the original cadence, or
/// `max`; default 1); `start_delay_ms` (default 0). Only the source's
/// metrics are emitted. Samples are grouped into one batch per timestamp.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayDriver;

impl Driver for ReplayDriver {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn required_params(&self, _kind: SourceKind) -> &'static [&'static str] {
        &["path"]
    }
}

impl RealtimeDriver for ReplayDriver {
    fn subscribe(&self, source: &SourceDescriptor) -> Result<SampleStream, ConnectorError> {
        let speed = parse_speed(source, Some(1.0))?;
        let delay = Duration::from_millis(source.parsed("start_delay_ms", 0u64)?);
        let mut samples = read_csv_source(source)?;
        if !source.metrics.is_empty() {
            samples.retain(|s| source.metrics.contains(&s.metric_id));
        }
        Ok(spawn_paced(batch_by_time(samples), speed, delay))
    }
}
