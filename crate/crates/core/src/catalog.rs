//! The validated set of places and metric definitions a store is built on.

use std::collections::HashMap;

use thiserror::Error;

use crate::expr::{self, resolve_metric_graph, Expr, GraphError, CAPACITY};
use crate::model::{MetricDef, MetricKind, Place};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("duplicate place id {0:?}")]
    DuplicatePlace(String),
    #[error("metric {id:?}: cap must be positive (got {cap})")]
    NonPositiveCap { id: String, cap: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone)]
pub struct Catalog {
    places: Vec<Place>,
    place_index: HashMap<String, usize>,
    metrics: Vec<MetricDef>,
    metric_index: HashMap<String, usize>,
    exprs: Vec<Option<Expr>>,
    order: Vec<String>,
    base_deps: Vec<Vec<usize>>,
}

impl Catalog {
    pub fn new(places: Vec<Place>, metrics: Vec<MetricDef>) -> Result<Self, CatalogError> {
        let mut place_index = HashMap::with_capacity(places.len());
        for (i, p) in places.iter().enumerate() {
            if place_index.insert(p.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicatePlace(p.id.clone()));
            }
        }
        for m in &metrics {
            if !m.cap.is_finite() || m.cap <= 0.0 {
                return Err(CatalogError::NonPositiveCap { id: m.id.clone(), cap: m.cap });
            }
        }
        let order = resolve_metric_graph(&metrics)?;
        let metric_index: HashMap<String, usize> =
            metrics.iter().enumerate().map(|(i, m)| (m.id.clone(), i)).collect();
        let exprs: Vec<Option<Expr>> = metrics
            .iter()
            .map(|m| match &m.kind {
                MetricKind::Base => None,
                // Already parsed successfully by resolve_metric_graph.
                MetricKind::Derived { expr } => expr::parse_expression(expr).ok(),
            })
            .collect();

        // Transitive base dependencies, filled in evaluation order.
        let mut base_deps: Vec<Vec<usize>> = vec![Vec::new(); metrics.len()];
        for id in &order {
            let i = metric_index[id];
            let deps = match &exprs[i] {
                None => vec![i],
                Some(e) => {
                    let mut acc: Vec<usize> = Vec::new();
                    for r in e.references() {
                        if r == CAPACITY {
                            continue;
                        }
                        for &b in &base_deps[metric_index[r]] {
                            if !acc.contains(&b) {
                                acc.push(b);
                            }
                        }
                    }
                    acc.sort_unstable();
                    acc
                }
            };
            base_deps[i] = deps;
        }

        Ok(Catalog { places, place_index, metrics, metric_index, exprs, order, base_deps })
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn metrics(&self) -> &[MetricDef] {
        &self.metrics
    }

    pub fn place_idx(&self, id: &str) -> Option<usize> {
        self.place_index.get(id).copied()
    }

    pub fn metric_idx(&self, id: &str) -> Option<usize> {
        self.metric_index.get(id).copied()
    }

    pub fn metric(&self, id: &str) -> Option<&MetricDef> {
        self.metric_idx(id).map(|i| &self.metrics[i])
    }

    /// Metric ids in dependency order (base metrics first).
    pub fn evaluation_order(&self) -> &[String] {
        &self.order
    }

    /// Indices of the base metrics a metric ultimately reads.
    pub fn base_dependencies(&self, metric: usize) -> &[usize] {
        &self.base_deps[metric]
    }

    /// Metrics (base and derived) whose value depends on the given base metric.
    pub fn dependents_of(&self, base: usize) -> Vec<usize> {
        (0..self.metrics.len()).filter(|&m| self.base_deps[m].contains(&base)).collect()
    }

    /// Value of `metric` at a place, reading base metrics through `base`.
    /// Derived metrics see `capacity` bound to the place's capacity
    /// (missing when the place has none).
    pub fn eval_metric(&self, metric: usize, place: usize, base: &dyn Fn(usize) -> Option<f64>) -> Option<f64> {
        match &self.exprs[metric] {
            None => base(metric),
            Some(e) => {
                let bind = |id: &str| -> Option<Option<f64>> {
                    if id == CAPACITY {
                        return Some(self.places[place].capacity);
                    }
                    let m = self.metric_idx(id)?;
                    Some(self.eval_metric(m, place, base))
                };
                // Every reference was resolved when the catalog was built.
                expr::evaluate(e, &bind).ok().flatten()
            }
        }
    }
}
