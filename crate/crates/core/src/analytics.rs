//! Numeric mappings behind the map, timeline and chart views.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Frame, Place, Region, Series, SeriesPoint};
use crate::store::{Store, StoreView};
use crate::time::Timestamp;

/// Hue (HSL degrees) assigned to the smallest sum of a timeline.
pub const HUE_MIN_SUM: f64 = 120.0;
/// Hue assigned to the largest sum.
pub const HUE_MAX_SUM: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("invalid range: from {from} is after to {to}")]
    InvalidRange { from: Timestamp, to: Timestamp },
    #[error("staleness must be positive (got {0} s)")]
    InvalidStaleness(i64),
    #[error("cap must be positive (got {0})")]
    InvalidCap(f64),
    #[error("series has no values")]
    NoData,
}

/// How place values are combined into one series point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    /// Plain mean over the non-missing places (used for dwell-time style metrics).
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HueStop {
    pub t: Timestamp,
    pub hue: f64,
    pub sum: f64,
}

fn metric_index(view: &StoreView<'_>, metric_id: &str) -> Result<usize, AnalyticsError> {
    view.catalog().metric_idx(metric_id).ok_or_else(|| AnalyticsError::UnknownMetric(metric_id.to_string()))
}

/// Map state at `t`: each place gets its latest sample at or before `t`
/// that is at most `staleness_secs` old, or missing. Derived metrics are
/// evaluated per place from their inputs under the same rule.
pub fn frame_at(store: &Store, metric_id: &str, t: Timestamp, staleness_secs: i64) -> Result<Frame, AnalyticsError> {
    let view = store.read();
    frame_at_view(&view, metric_id, t, staleness_secs)
}

pub fn frame_at_view(view: &StoreView<'_>, metric_id: &str, t: Timestamp, staleness_secs: i64) -> Result<Frame, AnalyticsError> {
    let m = metric_index(view, metric_id)?;
    if staleness_secs <= 0 {
        return Err(AnalyticsError::InvalidStaleness(staleness_secs));
    }
    let cat = view.catalog();
    let values = cat
        .places()
        .iter()
        .enumerate()
        .map(|(p, place)| {
            let base = |b: usize| view.column(b, p).latest(t.unix(), staleness_secs);
            (place.id.clone(), cat.eval_metric(m, p, &base))
        })
        .collect();
    Ok(Frame { t, metric_id: metric_id.to_string(), values })
}

/// Places whose representative point lies in the region (edges inclusive).
pub fn region_filter<'a>(places: &'a [Place], region: &Region) -> Vec<&'a Place> {
    places.iter().filter(|p| region.contains(p.representative_point())).collect()
}

fn selected_places(view: &StoreView<'_>, region: Option<&Region>) -> Vec<usize> {
    let places = view.catalog().places();
    match region {
        None => (0..places.len()).collect(),
        Some(r) => (0..places.len()).filter(|&i| r.contains(places[i].representative_point())).collect(),
    }
}

fn merge_times(view: &StoreView<'_>, metrics: &[usize], from: i64, to: i64) -> Vec<i64> {
    let mut out: Vec<i64> = Vec::new();
    for &m in metrics {
        let times = view.times(m);
        let lo = times.partition_point(|&t| t < from);
        let hi = times.partition_point(|&t| t <= to);
        out.extend_from_slice(&times[lo..hi.max(lo)]);
    }
    if metrics.len() > 1 {
        out.sort_unstable();
        out.dedup();
    }
    out
}

/// One point per distinct sample timestamp in `[from, to]`, combining the
/// non-missing values of the selected places. A timestamp where every
/// selected place is missing yields a missing point.
pub fn aggregate_series(
    store: &Store,
    metric_id: &str,
    from: Timestamp,
    to: Timestamp,
    region: Option<&Region>,
    agg: Aggregation,
) -> Result<Series, AnalyticsError> {
    let view = store.read();
    aggregate_series_view(&view, metric_id, from, to, region, agg)
}

pub fn aggregate_series_view(
    view: &StoreView<'_>,
    metric_id: &str,
    from: Timestamp,
    to: Timestamp,
    region: Option<&Region>,
    agg: Aggregation,
) -> Result<Series, AnalyticsError> {
    let m = metric_index(view, metric_id)?;
    if from > to {
        return Err(AnalyticsError::InvalidRange { from, to });
    }
    let cat = view.catalog();
    let places = selected_places(view, region);
    let deps = cat.base_dependencies(m);
    let times = merge_times(view, deps, from.unix(), to.unix());
    let mut sums = vec![0.0_f64; times.len()];
    let mut counts = vec![0_u32; times.len()];

    if cat.metrics()[m].is_base() {
        for &p in &places {
            let (ts, vs) = view.column(m, p).range(from.unix(), to.unix());
            // Both sequences are sorted: walk the timeline forward.
            let mut k = 0;
            for (&t, &v) in ts.iter().zip(vs) {
                k += times[k..].partition_point(|&x| x < t);
                sums[k] += v;
                counts[k] += 1;
            }
        }
    } else {
        for (k, &t) in times.iter().enumerate() {
            for &p in &places {
                let base = |b: usize| view.column(b, p).at(t);
                if let Some(v) = cat.eval_metric(m, p, &base) {
                    sums[k] += v;
                    counts[k] += 1;
                }
            }
        }
    }

    let points = times
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(&t, (&s, &n))| {
            let value = match (n, agg) {
                (0, _) => None,
                (_, Aggregation::Sum) => Some(s),
                (n, Aggregation::Mean) => Some(s / n as f64),
            };
            SeriesPoint { t: Timestamp::from_unix(t), value }
        })
        .collect();
    Ok(Series::new(metric_id, points))
}

/// Distinct sample instants in `[from, to]` of the base metrics feeding
/// `metric_id`, ascending.
pub fn sample_times(store: &Store, metric_id: &str, from: Timestamp, to: Timestamp) -> Result<Vec<Timestamp>, AnalyticsError> {
    let view = store.read();
    let m = metric_index(&view, metric_id)?;
    if from > to {
        return Err(AnalyticsError::InvalidRange { from, to });
    }
    let deps = view.catalog().base_dependencies(m);
    Ok(merge_times(&view, deps, from.unix(), to.unix()).into_iter().map(Timestamp::from_unix).collect())
}

/// Instantaneous sum over the map, or over the places inside `region`.
pub fn sum_series(
    store: &Store,
    metric_id: &str,
    from: Timestamp,
    to: Timestamp,
    region: Option<&Region>,
) -> Result<Series, AnalyticsError> {
    aggregate_series(store, metric_id, from, to, region, Aggregation::Sum)
}

/// Maps each non-missing sum linearly onto hue 120 (minimum) .. 0 (maximum).
/// A constant series maps entirely to 120.
pub fn timeline_hues(series: &Series) -> Result<Vec<HueStop>, AnalyticsError> {
    let (min, max) = series
        .present()
        .fold(None, |acc: Option<(f64, f64)>, (_, v)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .ok_or(AnalyticsError::NoData)?;
    let span = max - min;
    Ok(series
        .present()
        .map(|(t, sum)| {
            let hue = if span > 0.0 {
                HUE_MIN_SUM * (1.0 - (sum - min) / span)
            } else {
                HUE_MIN_SUM
            };
            HueStop { t, hue: hue.clamp(HUE_MAX_SUM, HUE_MIN_SUM), sum }
        })
        .collect())
}

/// `value / cap` clamped to `[0, 1]`.
pub fn normalize_to_cap(value: f64, cap: f64) -> Result<f64, AnalyticsError> {
    if !cap.is_finite() || cap <= 0.0 {
        return Err(AnalyticsError::InvalidCap(cap));
    }
    let r = value / cap;
    Ok(if r.is_nan() { 0.0 } else { r.clamp(0.0, 1.0) })
}

/// Value per unit of carrying capacity; missing without a positive capacity.
pub fn density(value: f64, capacity: Option<f64>) -> Option<f64> {
    capacity.filter(|&c| c > 0.0).map(|c| value / c).filter(|d| d.is_finite())
}

/// Earliest point attaining the maximum non-missing value.
pub fn peak(series: &Series) -> Result<(Timestamp, f64), AnalyticsError> {
    series
        .present()
        .fold(None, |best: Option<(Timestamp, f64)>, (t, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((t, v)),
        })
        .ok_or(AnalyticsError::NoData)
}

/// RGB triple for a hue at saturation 100% and lightness 50%.
pub fn hue_to_rgb(hue: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}
