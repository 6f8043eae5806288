//! Domain types shared across the crate: places, metrics, samples, frames,
//! regions and series, plus GeoJSON validation of place catalogs.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geo::{self, LonLat};
use crate::time::Timestamp;

/// Location geometry. Grid cells are polygons, sensors are points.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(LonLat),
    /// Closed outer ring; first vertex equals last.
    Polygon(Vec<LonLat>),
}

impl Geometry {
    /// The point used for region membership: the point itself, or the
    /// vertex centroid of a polygon ring.
    pub fn representative_point(&self) -> LonLat {
        match self {
            Geometry::Point(p) => *p,
            Geometry::Polygon(ring) => geo::vertex_centroid(ring),
        }
    }

    pub fn to_geojson(&self) -> Value {
        match self {
            Geometry::Point(p) => json!({ "type": "Point", "coordinates": [p.lon, p.lat] }),
            Geometry::Polygon(ring) => {
                let coords: Vec<[f64; 2]> = ring.iter().map(|p| [p.lon, p.lat]).collect();
                json!({ "type": "Polygon", "coordinates": [coords] })
            }
        }
    }
}

/// A measurement location with an optional carrying capacity (persons).
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: String,
    pub name: String,
    pub geometry: Geometry,
    pub capacity: Option<f64>,
}

impl Place {
    pub fn representative_point(&self) -> LonLat {
        self.geometry.representative_point()
    }

    pub fn to_feature(&self) -> Value {
        let mut props = Map::new();
        props.insert("id".into(), Value::String(self.id.clone()));
        props.insert("name".into(), Value::String(self.name.clone()));
        if let Some(c) = self.capacity {
            props.insert("capacity".into(), json!(c));
        }
        json!({
            "type": "Feature",
            "geometry": self.geometry.to_geojson(),
            "properties": Value::Object(props),
        })
    }
}

/// Serializes places as a GeoJSON FeatureCollection, preserving order.
pub fn places_to_geojson(places: &[Place]) -> Value {
    json!({
        "type": "FeatureCollection",
        "features": places.iter().map(Place::to_feature).collect::<Vec<_>>(),
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlaceError {
    #[error("not a GeoJSON FeatureCollection: {0}")]
    NotFeatureCollection(String),
    #[error("feature {index}: missing id")]
    MissingId { index: usize },
    #[error("feature {index}: missing name")]
    MissingName { index: usize },
    #[error("feature {index}: duplicate id {id:?}")]
    DuplicateId { index: usize, id: String },
    #[error("feature {index}: unsupported geometry type {kind:?}")]
    UnsupportedGeometry { index: usize, kind: String },
    #[error("feature {index}: invalid geometry: {reason}")]
    InvalidGeometry { index: usize, reason: String },
    #[error("feature {index}: capacity must be positive (got {value})")]
    NonPositiveCapacity { index: usize, value: f64 },
    #[error("feature {index}: capacity must be a number")]
    InvalidCapacity { index: usize },
}

impl PlaceError {
    pub fn feature_index(&self) -> Option<usize> {
        match self {
            PlaceError::NotFeatureCollection(_) => None,
            PlaceError::MissingId { index }
            | PlaceError::MissingName { index }
            | PlaceError::DuplicateId { index, .. }
            | PlaceError::UnsupportedGeometry { index, .. }
            | PlaceError::InvalidGeometry { index, .. }
            | PlaceError::NonPositiveCapacity { index, .. }
            | PlaceError::InvalidCapacity { index } => Some(*index),
        }
    }
}

fn parse_position(v: &Value) -> Option<LonLat> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    Some(LonLat::new(arr[0].as_f64()?, arr[1].as_f64()?))
}

/// Parses and validates a single ring (list of positions).
pub fn parse_ring(v: &Value, require_closed: bool) -> Result<Vec<LonLat>, String> {
    let arr = v.as_array().ok_or("ring is not an array")?;
    let mut ring = Vec::with_capacity(arr.len());
    for pos in arr {
        let p = parse_position(pos).ok_or("position is not a [lon, lat] pair")?;
        if !p.is_valid() {
            return Err(format!("coordinate ({}, {}) out of range", p.lon, p.lat));
        }
        ring.push(p);
    }
    if geo::distinct_vertex_count(&ring) < 3 {
        return Err("ring needs at least 3 distinct vertices".into());
    }
    let closed = ring.first() == ring.last();
    if !closed {
        if require_closed {
            return Err("ring is not closed".into());
        }
        ring.push(ring[0]);
    }
    Ok(ring)
}

fn parse_geometry(index: usize, v: &Value) -> Result<Geometry, PlaceError> {
    let invalid = |reason: String| PlaceError::InvalidGeometry { index, reason };
    let kind = v
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("geometry has no type".into()))?;
    let coords = v.get("coordinates").ok_or_else(|| invalid("geometry has no coordinates".into()));
    match kind {
        "Point" => {
            let p = parse_position(coords?).ok_or_else(|| invalid("point is not a [lon, lat] pair".into()))?;
            if !p.is_valid() {
                return Err(invalid(format!("coordinate ({}, {}) out of range", p.lon, p.lat)));
            }
            Ok(Geometry::Point(p))
        }
        "Polygon" => {
            let rings = coords?.as_array().ok_or_else(|| invalid("polygon coordinates are not an array".into()))?;
            match rings.as_slice() {
                [outer] => parse_ring(outer, true).map(Geometry::Polygon).map_err(invalid),
                [] => Err(invalid("polygon has no rings".into())),
                _ => Err(invalid("polygons with holes are not supported".into())),
            }
        }
        other => Err(PlaceError::UnsupportedGeometry { index, kind: other.to_string() }),
    }
}

/// Validates a GeoJSON FeatureCollection into places, in document order.
pub fn validate_places(doc: &Value) -> Result<Vec<Place>, PlaceError> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(PlaceError::NotFeatureCollection("type must be \"FeatureCollection\"".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| PlaceError::NotFeatureCollection("missing features array".into()))?;

    let mut seen = HashSet::new();
    let mut places = Vec::with_capacity(features.len());
    for (index, feature) in features.iter().enumerate() {
        let props = feature.get("properties").and_then(Value::as_object);
        let id = props
            .and_then(|p| p.get("id"))
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or(PlaceError::MissingId { index })?;
        let name = props
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .ok_or(PlaceError::MissingName { index })?;
        let capacity = match props.and_then(|p| p.get("capacity")) {
            None | Some(Value::Null) => None,
            Some(v) => {
                let c = v.as_f64().ok_or(PlaceError::InvalidCapacity { index })?;
                if !c.is_finite() || c <= 0.0 {
                    return Err(PlaceError::NonPositiveCapacity { index, value: c });
                }
                Some(c)
            }
        };
        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| PlaceError::InvalidGeometry { index, reason: "feature has no geometry".into() })
            .and_then(|g| parse_geometry(index, g))?;
        if !seen.insert(id.to_string()) {
            return Err(PlaceError::DuplicateId { index, id: id.to_string() });
        }
        places.push(Place { id: id.to_string(), name: name.to_string(), geometry, capacity });
    }
    Ok(places)
}

/// How a metric's values are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricKind {
    Base,
    Derived { expr: String },
}

/// A metric with display metadata and its `cap`: the value considered
/// "very high", used to scale column heights and colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDef {
    pub id: String,
    pub label: String,
    pub unit: String,
    pub cap: f64,
    #[serde(flatten)]
    pub kind: MetricKind,
}

impl MetricDef {
    pub fn base(id: &str, label: &str, unit: &str, cap: f64) -> Self {
        MetricDef { id: id.into(), label: label.into(), unit: unit.into(), cap, kind: MetricKind::Base }
    }

    pub fn derived(id: &str, label: &str, unit: &str, cap: f64, expr: &str) -> Self {
        MetricDef {
            id: id.into(),
            label: label.into(),
            unit: unit.into(),
            cap,
            kind: MetricKind::Derived { expr: expr.into() },
        }
    }

    pub fn is_base(&self) -> bool {
        matches!(self.kind, MetricKind::Base)
    }
}

/// One observation. `(place_id, t, metric_id)` is the upsert key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub place_id: String,
    pub t: Timestamp,
    pub metric_id: String,
    pub value: f64,
}

impl Sample {
    pub fn new(place_id: impl Into<String>, t: Timestamp, metric_id: impl Into<String>, value: f64) -> Self {
        Sample { place_id: place_id.into(), t, metric_id: metric_id.into(), value }
    }
}

/// Map state of one metric at one instant. Every known place has an entry;
/// `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: Timestamp,
    pub metric_id: String,
    pub values: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: Timestamp,
    pub value: Option<f64>,
}

/// Timestamped aggregate values, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub metric_id: String,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn new(metric_id: impl Into<String>, points: Vec<SeriesPoint>) -> Self {
        Series { metric_id: metric_id.into(), points }
    }

    /// Convenience constructor from `(unix seconds, value)` pairs.
    pub fn from_pairs(metric_id: &str, pairs: &[(i64, Option<f64>)]) -> Self {
        let points = pairs
            .iter()
            .map(|&(t, value)| SeriesPoint { t: Timestamp::from_unix(t), value })
            .collect();
        Series::new(metric_id, points)
    }

    pub fn present(&self) -> impl Iterator<Item = (Timestamp, f64)> + '_ {
        self.points.iter().filter_map(|p| p.value.map(|v| (p.t, v)))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid region: {0}")]
pub struct RegionError(pub String);

/// A user-drawn area of interest made of one or more polygon rings.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    rings: Vec<Vec<LonLat>>,
}

impl Region {
    /// Validates the rings, closing any that are left open.
    pub fn new(rings: Vec<Vec<LonLat>>) -> Result<Self, RegionError> {
        if rings.is_empty() {
            return Err(RegionError("region has no rings".into()));
        }
        let rings = rings
            .into_iter()
            .map(|ring| {
                let v = Value::Array(ring.iter().map(|p| json!([p.lon, p.lat])).collect());
                parse_ring(&v, false).map_err(RegionError)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Region { rings })
    }

    pub fn from_ring(ring: Vec<LonLat>) -> Result<Self, RegionError> {
        Region::new(vec![ring])
    }

    pub fn rings(&self) -> &[Vec<LonLat>] {
        &self.rings
    }

    pub fn contains(&self, p: LonLat) -> bool {
        self.rings.iter().any(|ring| geo::ring_contains(ring, p))
    }

    /// Accepts a bare ring `[[lon, lat], ...]`, polygon coordinates
    /// `[[[lon, lat], ...]]`, or a GeoJSON Polygon / MultiPolygon geometry,
    /// Feature, or FeatureCollection of those.
    pub fn from_json(v: &Value) -> Result<Self, RegionError> {
        let mut rings = Vec::new();
        collect_rings(v, &mut rings)?;
        Region::new(rings)
    }

    pub fn parse(text: &str) -> Result<Self, RegionError> {
        let v: Value = serde_json::from_str(text).map_err(|e| RegionError(format!("not JSON: {e}")))?;
        Region::from_json(&v)
    }
}

fn ring_from_positions(v: &Value) -> Result<Vec<LonLat>, RegionError> {
    let arr = v.as_array().ok_or_else(|| RegionError("ring is not an array".into()))?;
    arr.iter()
        .map(|p| parse_position(p).ok_or_else(|| RegionError("position is not a [lon, lat] pair".into())))
        .collect()
}

fn collect_rings(v: &Value, out: &mut Vec<Vec<LonLat>>) -> Result<(), RegionError> {
    match v {
        Value::Object(obj) => match obj.get("type").and_then(Value::as_str) {
            Some("Polygon") => {
                let outer = obj
                    .get("coordinates")
                    .and_then(Value::as_array)
                    .and_then(|r| r.first())
                    .ok_or_else(|| RegionError("polygon has no rings".into()))?;
                out.push(ring_from_positions(outer)?);
                Ok(())
            }
            Some("MultiPolygon") => {
                let polys = obj
                    .get("coordinates")
                    .and_then(Value::as_array)
                    .ok_or_else(|| RegionError("multipolygon has no coordinates".into()))?;
                for poly in polys {
                    let outer = poly
                        .as_array()
                        .and_then(|r| r.first())
                        .ok_or_else(|| RegionError("polygon has no rings".into()))?;
                    out.push(ring_from_positions(outer)?);
                }
                Ok(())
            }
            Some("Feature") => collect_rings(obj.get("geometry").unwrap_or(&Value::Null), out),
            Some("FeatureCollection") => {
                for f in obj.get("features").and_then(Value::as_array).into_iter().flatten() {
                    collect_rings(f, out)?;
                }
                Ok(())
            }
            Some(other) => Err(RegionError(format!("unsupported geometry type {other:?}"))),
            None => Err(RegionError("object has no type".into())),
        },
        Value::Array(items) => {
            // Distinguish a bare ring from polygon coordinates by nesting depth.
            let depth3 = items.first().and_then(Value::as_array).and_then(|a| a.first()).is_some_and(Value::is_array);
            if depth3 {
                out.push(ring_from_positions(&items[0])?);
            } else {
                out.push(ring_from_positions(v)?);
            }
            Ok(())
        }
        _ => Err(RegionError("expected a ring or GeoJSON polygon".into())),
    }
}
