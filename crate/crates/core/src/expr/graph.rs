use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::{parse_expression, ParseError, CAPACITY};
use crate::model::{MetricDef, MetricKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate metric id {0:?}")]
    DuplicateId(String),
    #[error("metric id {0:?} is reserved")]
    ReservedId(String),
    #[error("metric {metric:?} references unknown metric {unknown:?}")]
    UnknownMetric { metric: String, unknown: String },
    #[error("metric dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("metric {metric:?}: {source}")]
    Expression { metric: String, source: ParseError },
}

/// Orders metrics so every derived metric follows its dependencies.
/// Base metrics come first in their given order; derived metrics follow in
/// definition order as soon as their inputs are available.
pub fn resolve_metric_graph(defs: &[MetricDef]) -> Result<Vec<String>, GraphError> {
    let mut index = HashMap::new();
    for (i, d) in defs.iter().enumerate() {
        if d.id == CAPACITY {
            return Err(GraphError::ReservedId(d.id.clone()));
        }
        if index.insert(d.id.as_str(), i).is_some() {
            return Err(GraphError::DuplicateId(d.id.clone()));
        }
    }

    let mut deps: Vec<Vec<usize>> = Vec::with_capacity(defs.len());
    for d in defs {
        let mut ds = Vec::new();
        if let MetricKind::Derived { expr } = &d.kind {
            let parsed = parse_expression(expr)
                .map_err(|source| GraphError::Expression { metric: d.id.clone(), source })?;
            for r in parsed.references() {
                if r == CAPACITY {
                    continue;
                }
                let j = *index.get(r).ok_or_else(|| GraphError::UnknownMetric {
                    metric: d.id.clone(),
                    unknown: r.to_string(),
                })?;
                ds.push(j);
            }
        }
        deps.push(ds);
    }

    let mut order: Vec<usize> = defs.iter().enumerate().filter(|(_, d)| d.is_base()).map(|(i, _)| i).collect();
    let mut placed = vec![false; defs.len()];
    for &i in &order {
        placed[i] = true;
    }
    loop {
        let next = (0..defs.len()).find(|&i| !placed[i] && deps[i].iter().all(|&j| placed[j]));
        match next {
            Some(i) => {
                placed[i] = true;
                order.push(i);
            }
            None => break,
        }
    }
    if order.len() < defs.len() {
        return Err(GraphError::Cycle(find_cycle(defs, &deps, &placed)));
    }
    Ok(order.into_iter().map(|i| defs[i].id.clone()).collect())
}

/// Extracts one cycle among the unplaced nodes, rotated to start at its
/// lexicographically smallest id and closed by repeating it.
fn find_cycle(defs: &[MetricDef], deps: &[Vec<usize>], placed: &[bool]) -> Vec<String> {
    let start = (0..defs.len()).find(|&i| !placed[i]).expect("an unplaced node exists");
    // Every unplaced node has an unplaced dependency, so walking them must revisit a node.
    let mut path = vec![start];
    let mut seen = BTreeSet::from([start]);
    let mut cur = start;
    loop {
        let nxt = *deps[cur].iter().find(|&&j| !placed[j]).expect("unplaced dependency");
        if !seen.insert(nxt) {
            let pos = path.iter().position(|&n| n == nxt).unwrap();
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            let min = (0..cycle.len()).min_by_key(|&k| &defs[cycle[k]].id).unwrap();
            cycle.rotate_left(min);
            let mut ids: Vec<String> = cycle.iter().map(|&n| defs[n].id.clone()).collect();
            ids.push(ids[0].clone());
            return ids;
        }
        path.push(nxt);
        cur = nxt;
    }
}
