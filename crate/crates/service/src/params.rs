//! Query-string parsing with API-style errors.

use std::collections::BTreeMap;

use axum::extract::{FromRequestParts, Query};
use axum::http::request::Parts;
use crowdlens_core::analytics::Aggregation;
use crowdlens_core::{Region, Timestamp};

use crate::error::ApiError;

pub struct Params(BTreeMap<String, String>);

impl<S: Send + Sync> FromRequestParts<S> for Params {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<BTreeMap<String, String>>::from_request_parts(parts, state)
            .await
            .map(|Query(q)| Params(q))
            .map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))
    }
}

impl Params {
    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        Params(map)
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(|s| s.trim()).filter(|s| !s.is_empty())
    }

    pub fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.get(name).ok_or_else(|| ApiError::bad_request("missing_param", format!("missing parameter {name:?}")))
    }

    fn time(&self, name: &str) -> Result<Option<Timestamp>, ApiError> {
        self.get(name)
            .map(|s| s.parse().map_err(|e| ApiError::bad_request("invalid_param", format!("parameter {name:?}: {e}"))))
            .transpose()
    }

    /// `from`/`to`, inclusive and each optional; `from` must not follow `to`.
    pub fn range(&self) -> Result<(Timestamp, Timestamp), ApiError> {
        let from = self.time("from")?.unwrap_or(Timestamp::MIN);
        let to = self.time("to")?.unwrap_or(Timestamp::MAX);
        if from > to {
            return Err(ApiError::bad_request("invalid_range", format!("from {from} is after to {to}")));
        }
        Ok((from, to))
    }

    /// A positive integer parameter.
    pub fn positive(&self, name: &str) -> Result<Option<i64>, ApiError> {
        self.get(name)
            .map(|s| match s.parse::<i64>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(ApiError::bad_request("invalid_param", format!("parameter {name:?} must be a positive integer"))),
            })
            .transpose()
    }

    /// `region`: a lon/lat ring or any GeoJSON polygon form, as JSON text.
    pub fn region(&self) -> Result<Option<Region>, ApiError> {
        self.get("region")
            .map(|s| Region::parse(s).map_err(|e| ApiError::bad_request("invalid_region", e.to_string())))
            .transpose()
    }

    pub fn aggregation(&self) -> Result<Aggregation, ApiError> {
        match self.get("agg") {
            None | Some("sum") => Ok(Aggregation::Sum),
            Some("mean") => Ok(Aggregation::Mean),
            Some(other) => Err(ApiError::bad_request("invalid_param", format!("agg must be \"sum\" or \"mean\" (got {other:?})"))),
        }
    }
}
