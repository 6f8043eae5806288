use std::time::Duration;

use super::{batch_by_time, parse_speed, spawn_paced, ConnectorError, Driver, RealtimeDriver, SampleStream, SourceDescriptor, SourceKind};
use crate::scenario::{synthesize, Spike, Waveform};
use crate::time::Timestamp;

/// Seeded waveform stream.
///
/// Params: `seed`, `start`, `end`, `places` (comma-separated ids) are
/// required; `cadence_secs` (600), `base` (100), `amplitude` (0.5),
/// `noise` (0.1), `peak_hour` (14), `integer` (true), `spikes`
/// (`place@time=magnitude`, `;`-separated, applied to the first metric),
/// `speed` (`max`) and `start_delay_ms` (0) are optional.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticDriver;

impl SyntheticDriver {
    pub fn waveform(source: &SourceDescriptor) -> Result<Waveform, ConnectorError> {
        let param_err = |param: &str, message: String| ConnectorError::Param {
            source_name: source.name.clone(),
            param: param.into(),
            message,
        };
        let ts = |name: &str| -> Result<Timestamp, ConnectorError> {
            source.require(name)?.parse().map_err(|e: crate::time::TimestampParseError| param_err(name, e.to_string()))
        };
        let spikes = source
            .param("spikes")
            .map(|raw| {
                raw.split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Spike>().map_err(|e| param_err("spikes", e)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?
            .unwrap_or_default();
        let defaults = Waveform::default();
        let w = Waveform {
            seed: source.require("seed")?.trim().parse().map_err(|_| param_err("seed", "expected an unsigned integer".into()))?,
            start: ts("start")?,
            end: ts("end")?,
            cadence_secs: source.parsed("cadence_secs", defaults.cadence_secs)?,
            places: source.require("places")?.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect(),
            metrics: source.metrics.clone(),
            base: source.parsed("base", defaults.base)?,
            amplitude: source.parsed("amplitude", defaults.amplitude)?,
            noise: source.parsed("noise", defaults.noise)?,
            peak_hour: source.parsed("peak_hour", defaults.peak_hour)?,
            integer: source.parsed("integer", defaults.integer)?,
            spikes,
        };
        if w.cadence_secs <= 0 {
            return Err(param_err("cadence_secs", "must be positive".into()));
        }
        if w.end < w.start {
            return Err(param_err("end", "must not precede start".into()));
        }
        if w.noise < 0.0 || !w.noise.is_finite() {
            return Err(param_err("noise", "must be non-negative".into()));
        }
        Ok(w)
    }
}

impl Driver for SyntheticDriver {
    fn name(&self) -> &'static str {
        "synthetic"
    }

    fn required_params(&self, _kind: SourceKind) -> &'static [&'static str] {
        &["seed", "start", "end", "places"]
    }
}

impl RealtimeDriver for SyntheticDriver {
    fn subscribe(&self, source: &SourceDescriptor) -> Result<SampleStream, ConnectorError> {
        let w = SyntheticDriver::waveform(source)?;
        let speed = parse_speed(source, None)?;
        let delay = Duration::from_millis(source.parsed("start_delay_ms", 0u64)?);
        Ok(spawn_paced(batch_by_time(synthesize(&w)), speed, delay))
    }
}
