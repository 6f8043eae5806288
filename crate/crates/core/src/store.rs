//! In-process time-series store.
//!
//! Samples are held per `(metric, place)` in two parallel sorted vectors
//! (timestamps and values), so range lookups are a pair of binary searches.
//! Each metric also keeps the sorted set of distinct sample timestamps,
//! which drives series aggregation. Only base metrics are stored; derived
//! metrics are evaluated on read.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use parking_lot::{RwLock, RwLockReadGuard};
use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::csvio::{self, CsvError};
use crate::model::Sample;
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("sample {index}: unknown place {id:?}")]
    UnknownPlace { index: usize, id: String },
    #[error("sample {index}: unknown metric {id:?}")]
    UnknownMetric { index: usize, id: String },
    #[error("sample {index}: metric {id:?} is derived and cannot be stored")]
    DerivedMetric { index: usize, id: String },
    #[error("sample {index}: value is not finite")]
    NonFinite { index: usize },
    #[error("unknown metric {0:?}")]
    QueryUnknownMetric(String),
    #[error("invalid range: from {from} is after to {to}")]
    InvalidRange { from: Timestamp, to: Timestamp },
    #[error("snapshot {path}: {source}")]
    Snapshot { path: String, source: CsvError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub sample_count: usize,
    pub place_count: usize,
    pub metric_count: usize,
    pub t_min: Option<Timestamp>,
    pub t_max: Option<Timestamp>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Column {
    pub ts: Vec<i64>,
    pub vs: Vec<f64>,
}

impl Column {
    /// Returns true when a new key was inserted (false on replace).
    fn upsert(&mut self, t: i64, v: f64) -> bool {
        if self.ts.last().is_none_or(|&last| last < t) {
            self.ts.push(t);
            self.vs.push(v);
            return true;
        }
        match self.ts.binary_search(&t) {
            Ok(i) => {
                self.vs[i] = v;
                false
            }
            Err(i) => {
                self.ts.insert(i, t);
                self.vs.insert(i, v);
                true
            }
        }
    }

    pub fn range(&self, from: i64, to: i64) -> (&[i64], &[f64]) {
        let lo = self.ts.partition_point(|&t| t < from);
        let hi = self.ts.partition_point(|&t| t <= to);
        if lo >= hi {
            return (&[], &[]);
        }
        (&self.ts[lo..hi], &self.vs[lo..hi])
    }

    pub fn at(&self, t: i64) -> Option<f64> {
        self.ts.binary_search(&t).ok().map(|i| self.vs[i])
    }

    /// Latest value at or before `t`, no older than `t - staleness`.
    pub fn latest(&self, t: i64, staleness: i64) -> Option<f64> {
        let i = self.ts.partition_point(|&x| x <= t);
        if i == 0 {
            return None;
        }
        (t - self.ts[i - 1] <= staleness).then(|| self.vs[i - 1])
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct MetricColumns {
    pub by_place: Vec<Column>,
    /// Sorted distinct timestamps across all places.
    pub times: Vec<i64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Inner {
    pub metrics: Vec<MetricColumns>,
    pub sample_count: usize,
}

fn insert_sorted_unique(v: &mut Vec<i64>, t: i64) {
    if v.last().is_none_or(|&last| last < t) {
        v.push(t);
    } else if let Err(i) = v.binary_search(&t) {
        v.insert(i, t);
    }
}

/// Thread-safe store. Readers run concurrently; each upsert batch is applied
/// under one write lock, so readers see all of it or none of it.
pub struct Store {
    catalog: Arc<Catalog>,
    inner: RwLock<Inner>,
}

/// A consistent read view of the store.
pub struct StoreView<'a> {
    pub(crate) catalog: &'a Catalog,
    pub(crate) inner: RwLockReadGuard<'a, Inner>,
}

impl<'a> StoreView<'a> {
    pub fn catalog(&self) -> &Catalog {
        self.catalog
    }

    pub(crate) fn column(&self, metric: usize, place: usize) -> &Column {
        &self.inner.metrics[metric].by_place[place]
    }

    pub(crate) fn times(&self, metric: usize) -> &[i64] {
        &self.inner.metrics[metric].times
    }
}

impl Store {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        let inner = Store::empty_inner(&catalog);
        Store { catalog, inner: RwLock::new(inner) }
    }

    fn empty_inner(catalog: &Catalog) -> Inner {
        let metrics = catalog
            .metrics()
            .iter()
            .map(|m| MetricColumns {
                by_place: if m.is_base() { vec![Column::default(); catalog.places().len()] } else { Vec::new() },
                times: Vec::new(),
            })
            .collect();
        Inner { metrics, sample_count: 0 }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn read(&self) -> StoreView<'_> {
        StoreView { catalog: &self.catalog, inner: self.inner.read() }
    }

    fn resolve(&self, samples: &[Sample]) -> Result<Vec<(usize, usize)>, StoreError> {
        samples
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let p = self
                    .catalog
                    .place_idx(&s.place_id)
                    .ok_or_else(|| StoreError::UnknownPlace { index, id: s.place_id.clone() })?;
                let m = self
                    .catalog
                    .metric_idx(&s.metric_id)
                    .ok_or_else(|| StoreError::UnknownMetric { index, id: s.metric_id.clone() })?;
                if !self.catalog.metrics()[m].is_base() {
                    return Err(StoreError::DerivedMetric { index, id: s.metric_id.clone() });
                }
                if !s.value.is_finite() {
                    return Err(StoreError::NonFinite { index });
                }
                Ok((m, p))
            })
            .collect()
    }

    fn apply(inner: &mut Inner, samples: &[Sample], keys: &[(usize, usize)]) {
        for (s, &(m, p)) in samples.iter().zip(keys) {
            let mc = &mut inner.metrics[m];
            let t = s.t.unix();
            if mc.by_place[p].upsert(t, s.value) {
                inner.sample_count += 1;
                insert_sorted_unique(&mut mc.times, t);
            }
        }
    }

    /// Inserts or replaces samples keyed by `(place, t, metric)`. The batch
    /// is validated up front and rejected whole on the first bad sample.
    /// Returns the number of samples applied (inserted plus replaced).
    pub fn upsert(&self, samples: &[Sample]) -> Result<usize, StoreError> {
        let keys = self.resolve(samples)?;
        let mut inner = self.inner.write();
        Store::apply(&mut inner, samples, &keys);
        Ok(samples.len())
    }

    /// Base-metric samples in `[from, to]`, sorted by `(t, place_id)`.
    pub fn query_range(
        &self,
        metric_id: &str,
        from: Timestamp,
        to: Timestamp,
        place_filter: Option<&HashSet<String>>,
    ) -> Result<Vec<Sample>, StoreError> {
        if from > to {
            return Err(StoreError::InvalidRange { from, to });
        }
        let m = self
            .catalog
            .metric_idx(metric_id)
            .filter(|&m| self.catalog.metrics()[m].is_base())
            .ok_or_else(|| StoreError::QueryUnknownMetric(metric_id.to_string()))?;
        let view = self.read();
        let mut out = Vec::new();
        for (p, place) in self.catalog.places().iter().enumerate() {
            if place_filter.is_some_and(|f| !f.contains(&place.id)) {
                continue;
            }
            let (ts, vs) = view.column(m, p).range(from.unix(), to.unix());
            out.extend(
                ts.iter()
                    .zip(vs)
                    .map(|(&t, &v)| Sample::new(place.id.clone(), Timestamp::from_unix(t), metric_id, v)),
            );
        }
        out.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.place_id.cmp(&b.place_id)));
        Ok(out)
    }

    /// Every stored sample, sorted by `(t, place_id, metric_id)`.
    pub fn all_samples(&self) -> Vec<Sample> {
        let view = self.read();
        let mut out = Vec::with_capacity(view.inner.sample_count);
        for (m, def) in self.catalog.metrics().iter().enumerate() {
            if !def.is_base() {
                continue;
            }
            for (p, place) in self.catalog.places().iter().enumerate() {
                let col = view.column(m, p);
                out.extend(
                    col.ts.iter().zip(&col.vs).map(|(&t, &v)| {
                        Sample::new(place.id.clone(), Timestamp::from_unix(t), def.id.clone(), v)
                    }),
                );
            }
        }
        out.sort_by(|a, b| (a.t, &a.place_id, &a.metric_id).cmp(&(b.t, &b.place_id, &b.metric_id)));
        out
    }

    pub fn stats(&self) -> StoreStats {
        let view = self.read();
        let mut places = HashSet::new();
        let mut metric_count = 0;
        let (mut t_min, mut t_max) = (None::<i64>, None::<i64>);
        for mc in &view.inner.metrics {
            if let (Some(&lo), Some(&hi)) = (mc.times.first(), mc.times.last()) {
                metric_count += 1;
                t_min = Some(t_min.map_or(lo, |x| x.min(lo)));
                t_max = Some(t_max.map_or(hi, |x| x.max(hi)));
            }
            for (p, col) in mc.by_place.iter().enumerate() {
                if !col.ts.is_empty() {
                    places.insert(p);
                }
            }
        }
        StoreStats {
            sample_count: view.inner.sample_count,
            place_count: places.len(),
            metric_count,
            t_min: t_min.map(Timestamp::from_unix),
            t_max: t_max.map(Timestamp::from_unix),
        }
    }

    /// Writes the whole store as sample CSV. The file is written to a
    /// sibling temporary path first and renamed into place.
    pub fn snapshot_save(&self, path: &Path) -> Result<StoreStats, StoreError> {
        let wrap = |source: CsvError| StoreError::Snapshot { path: path.display().to_string(), source };
        let samples = self.all_samples();
        let tmp = path.with_extension("csv.tmp");
        let file = File::create(&tmp).map_err(|e| wrap(e.into()))?;
        csvio::write_samples(BufWriter::new(file), &samples).map_err(wrap)?;
        std::fs::rename(&tmp, path).map_err(|e| wrap(e.into()))?;
        Ok(self.stats())
    }

    /// Replaces the store contents with a snapshot file.
    pub fn snapshot_load(&self, path: &Path) -> Result<StoreStats, StoreError> {
        let wrap = |source: CsvError| StoreError::Snapshot { path: path.display().to_string(), source };
        let file = File::open(path).map_err(|e| wrap(e.into()))?;
        let samples = csvio::read_samples(BufReader::new(file)).map_err(wrap)?;
        let keys = self.resolve(&samples)?;
        let mut fresh = Store::empty_inner(&self.catalog);
        Store::apply(&mut fresh, &samples, &keys);
        *self.inner.write() = fresh;
        Ok(self.stats())
    }
}
