//! Geo-temporal crowding analytics.
//!
//! Crowd counts arrive from pluggable [`connectors`] as [`model::Sample`]s
//! keyed by place, time and metric. The [`store`] keeps them in sorted
//! per-place columns; [`analytics`] turns them into map frames, region
//! sums, timeline hues and peaks. Derived metrics are arithmetic
//! [`expr`]essions over base metrics and each place's carrying capacity.

pub mod analytics;
pub mod catalog;
pub mod connectors;
pub mod csvio;
pub mod expr;
pub mod geo;
pub mod model;
pub mod scenario;
pub mod store;
pub mod time;

pub use analytics::{Aggregation, AnalyticsError, HueStop};
pub use catalog::Catalog;
pub use geo::LonLat;
pub use model::{Frame, Geometry, MetricDef, MetricKind, Place, Region, Sample, Series, SeriesPoint};
pub use store::{Store, StoreStats};
pub use time::Timestamp;
