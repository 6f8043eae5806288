//! Paged JSON HTTP source, standing in for open-data portal APIs.
//!
//! Requests are `GET <url>?from=<iso>&to=<iso>&page=<n>`, pages numbered
//! from `first_page` (default 0) until an empty array comes back. Each
//! element is a JSON object; field names are mapped by params:
//!
//! * `place_field` (default `place_id`), `time_field` (default `timestamp`;
//!   ISO-8601 string or Unix seconds)
//! * long format: `metric_field` names the metric, `value_field` (default
//!   `value`) the value
//! * wide format (no `metric_field`): each metric `m` is read from the field
//!   named by param `field.m`, or `m` itself
//!
//! As a realtime source the same endpoint is polled every `poll_secs`
//! (default: `cadence_secs`, else 600) for the window since the last poll.

use std::time::Duration;

use async_trait::async_trait;
use serde_json::Value;
use tokio::sync::mpsc;

use super::{batch_by_time, ConnectorError, Driver, HistoricalDriver, RealtimeDriver, SampleStream, SourceDescriptor, SourceKind};
use crate::model::Sample;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, Default)]
pub struct HttpJsonDriver;

/// Upper bound on pages per load, guarding against endpoints that never
/// return an empty page.
const DEFAULT_MAX_PAGES: u64 = 10_000;

fn schema(source: &SourceDescriptor, message: String) -> ConnectorError {
    ConnectorError::Schema { source_name: source.name.clone(), message }
}

fn field_str(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn map_record(
    source: &SourceDescriptor,
    page: u64,
    index: usize,
    record: &Value,
    metric_ids: &[String],
) -> Result<Vec<Sample>, ConnectorError> {
    let at = |field: &str| format!("page {page}, record {index}: field {field:?}");
    let get = |field: &str| record.get(field).filter(|v| !v.is_null()).ok_or_else(|| schema(source, format!("{} missing", at(field))));

    let place_field = source.param("place_field").unwrap_or("place_id");
    let time_field = source.param("time_field").unwrap_or("timestamp");
    let value_field = source.param("value_field").unwrap_or("value");

    let place = field_str(get(place_field)?).ok_or_else(|| schema(source, format!("{} is not a string", at(place_field))))?;
    let t = match get(time_field)? {
        Value::String(s) => s.parse().map_err(|e: crate::time::TimestampParseError| schema(source, format!("{}: {e}", at(time_field))))?,
        Value::Number(n) => Timestamp::from_unix(n.as_i64().ok_or_else(|| schema(source, format!("{} is not integral", at(time_field))))?),
        _ => return Err(schema(source, format!("{} is not a timestamp", at(time_field)))),
    };
    let number = |field: &str| -> Result<f64, ConnectorError> {
        let v = get(field)?;
        let n = match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        };
        n.filter(|x| x.is_finite()).ok_or_else(|| schema(source, format!("{} is not a finite number", at(field))))
    };

    if let Some(metric_field) = source.param("metric_field") {
        let metric = field_str(get(metric_field)?).ok_or_else(|| schema(source, format!("{} is not a string", at(metric_field))))?;
        if !metric_ids.contains(&metric) {
            return Ok(Vec::new());
        }
        return Ok(vec![Sample { place_id: place, t, metric_id: metric, value: number(value_field)? }]);
    }
    metric_ids
        .iter()
        .map(|m| {
            let field = source.param(&format!("field.{m}")).unwrap_or(m);
            Ok(Sample { place_id: place.clone(), t, metric_id: m.clone(), value: number(field)? })
        })
        .collect()
}

async fn fetch_window(
    client: &reqwest::Client,
    source: &SourceDescriptor,
    metric_ids: &[String],
    from: Timestamp,
    to: Timestamp,
) -> Result<Vec<Sample>, ConnectorError> {
    let url = source.require("url")?;
    let first_page: u64 = source.parsed("first_page", 0)?;
    let max_pages: u64 = source.parsed("max_pages", DEFAULT_MAX_PAGES)?;
    // Errors are rendered without the URL, which may carry credentials.
    let http = |e: reqwest::Error| ConnectorError::Http { source_name: source.name.clone(), message: e.without_url().to_string() };

    let mut out = Vec::new();
    for page in first_page..first_page.saturating_add(max_pages) {
        let mut req = client
            .get(url)
            .query(&[("from", from.to_iso()), ("to", to.to_iso()), ("page", page.to_string())]);
        if let Some(token) = source.param("token") {
            req = req.bearer_auth(token);
        }
        let body: Value = req.send().await.map_err(http)?.error_for_status().map_err(http)?.json().await.map_err(http)?;
        let records = body.as_array().ok_or_else(|| schema(source, format!("page {page}: response is not a JSON array")))?;
        if records.is_empty() {
            break;
        }
        for (i, r) in records.iter().enumerate() {
            out.extend(map_record(source, page, i, r, metric_ids)?);
        }
    }
    out.retain(|s| s.t >= from && s.t <= to);
    Ok(out)
}

impl Driver for HttpJsonDriver {
    fn name(&self) -> &'static str {
        "http-json"
    }

    fn required_params(&self, _kind: SourceKind) -> &'static [&'static str] {
        &["url"]
    }
}

#[async_trait]
impl HistoricalDriver for HttpJsonDriver {
    async fn load(
        &self,
        source: &SourceDescriptor,
        metric_ids: &[String],
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<Sample>, ConnectorError> {
        fetch_window(&reqwest::Client::new(), source, metric_ids, from, to).await
    }
}

impl RealtimeDriver for HttpJsonDriver {
    fn subscribe(&self, source: &SourceDescriptor) -> Result<SampleStream, ConnectorError> {
        let poll: u64 = source.parsed("poll_secs", source.cadence_secs().unwrap_or(600) as u64)?;
        let mut cursor: Timestamp = match source.param("start") {
            Some(s) => s.parse().map_err(|_| ConnectorError::Param {
                source_name: source.name.clone(),
                param: "start".into(),
                message: format!("invalid timestamp {s:?}"),
            })?,
            None => Timestamp::now().plus_secs(-(poll as i64)),
        };
        let source = source.clone();
        let (tx, rx) = mpsc::channel(64);
        tokio::spawn(async move {
            let client = reqwest::Client::new();
            let mut ticker = tokio::time::interval(Duration::from_secs(poll.max(1)));
            loop {
                ticker.tick().await;
                let now = Timestamp::now();
                if now < cursor {
                    continue;
                }
                match fetch_window(&client, &source, &source.metrics, cursor, now).await {
                    Ok(samples) => {
                        for batch in batch_by_time(samples) {
                            if tx.send(Ok(batch)).await.is_err() {
                                return;
                            }
                        }
                        cursor = now.plus_secs(1);
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e)).await;
                        return;
                    }
                }
            }
        });
        Ok(SampleStream::new(rx))
    }
}
