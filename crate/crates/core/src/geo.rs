//! Planar geometry on lon/lat pairs: ring containment and representative points.
//!
//! Coordinates are treated as a flat plane. Regions drawn on a city map are a
//! few kilometres across, so no reprojection is attempted.

use serde::{Deserialize, Serialize};

/// A `(lon, lat)` coordinate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }

    pub fn is_valid(self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

impl From<[f64; 2]> for LonLat {
    fn from([lon, lat]: [f64; 2]) -> Self {
        LonLat { lon, lat }
    }
}

impl From<LonLat> for [f64; 2] {
    fn from(p: LonLat) -> Self {
        [p.lon, p.lat]
    }
}

/// Relative tolerance for deciding that a point sits on a ring edge.
pub const EDGE_EPSILON: f64 = 1e-9;

/// Vertices of a ring without the closing duplicate, if present.
pub fn open_vertices(ring: &[LonLat]) -> &[LonLat] {
    match ring {
        [first, .., last] if ring.len() > 1 && first == last => &ring[..ring.len() - 1],
        _ => ring,
    }
}

/// Number of distinct vertices in a ring (closing vertex excluded).
pub fn distinct_vertex_count(ring: &[LonLat]) -> usize {
    let open = open_vertices(ring);
    let mut seen: Vec<LonLat> = Vec::with_capacity(open.len());
    for p in open {
        if !seen.contains(p) {
            seen.push(*p);
        }
    }
    seen.len()
}

/// Mean of the ring's vertices, closing duplicate excluded.
pub fn vertex_centroid(ring: &[LonLat]) -> LonLat {
    let open = open_vertices(ring);
    let n = open.len().max(1) as f64;
    let (lon, lat) = open
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p.lon, y + p.lat));
    LonLat::new(lon / n, lat / n)
}

fn on_segment(p: LonLat, a: LonLat, b: LonLat) -> bool {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let cross = dx * (p.lat - a.lat) - dy * (p.lon - a.lon);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p == a;
    }
    if cross.abs() > EDGE_EPSILON * len2.sqrt().max(1.0) {
        return false;
    }
    let dot = (p.lon - a.lon) * dx + (p.lat - a.lat) * dy;
    let slack = EDGE_EPSILON * len2;
    dot >= -slack && dot <= len2 + slack
}

/// Ray-casting containment test; points on an edge or vertex count as inside.
pub fn ring_contains(ring: &[LonLat], p: LonLat) -> bool {
    let vs = open_vertices(ring);
    let n = vs.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}
