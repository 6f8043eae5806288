use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Request, State};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Extension, Json, Router};
use crowdlens_core::analytics::{aggregate_series, frame_at, peak, sample_times, sum_series, timeline_hues};
use crowdlens_core::connectors::AppConfig;
use crowdlens_core::model::places_to_geojson;
use crowdlens_core::{AnalyticsError, Frame, Store, Timestamp};
use futures::Stream;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::error::ApiError;
use crate::hub::Hub;
use crate::keystore::KeyStore;
use crate::params::Params;

pub const API_KEY_HEADER: &str = "x-api-key";

/// Upper bound on frames returned by one `/api/frames` request.
pub const MAX_FRAMES: usize = 10_000;

/// Upper bound on metrics per `/api/series` request: the chart has two axes.
pub const MAX_SERIES_METRICS: usize = 2;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub keys: Arc<KeyStore>,
    pub hub: Arc<Hub>,
    /// Default staleness per metric id, seconds.
    pub staleness: Arc<HashMap<String, i64>>,
    pub heartbeat: Duration,
}

impl AppState {
    pub fn new(store: Arc<Store>, keys: Arc<KeyStore>, config: &AppConfig) -> Self {
        let staleness = store
            .catalog()
            .metrics()
            .iter()
            .map(|m| (m.id.clone(), config.staleness_for(store.catalog(), &m.id)))
            .collect();
        AppState {
            store,
            keys,
            hub: Arc::new(Hub::new(config.service.stream_buffer)),
            staleness: Arc::new(staleness),
            heartbeat: Duration::from_secs(config.service.heartbeat_secs.max(1)),
        }
    }

    pub fn staleness_of(&self, metric_id: &str) -> i64 {
        self.staleness.get(metric_id).copied().unwrap_or(crowdlens_core::connectors::DEFAULT_STALENESS_SECS)
    }

    fn known_metric<'a>(&self, metric_id: &'a str) -> Result<&'a str, ApiError> {
        match self.store.catalog().metric(metric_id) {
            Some(_) => Ok(metric_id),
            None => Err(AnalyticsError::UnknownMetric(metric_id.to_string()).into()),
        }
    }
}

/// Authenticated id of the caller, set by the auth layer.
#[derive(Debug, Clone)]
pub struct KeyId(pub String);

async fn require_key(State(state): State<AppState>, mut req: Request, next: Next) -> Response {
    let presented = req.headers().get(API_KEY_HEADER).and_then(|v| v.to_str().ok()).map(str::trim);
    match presented.and_then(|p| state.keys.verify(p)) {
        Some(key_id) => {
            tracing::info!(key_id = %key_id, method = %req.method(), path = %req.uri().path(), "authorized");
            req.extensions_mut().insert(KeyId(key_id));
            next.run(req).await
        }
        None => {
            tracing::info!(method = %req.method(), path = %req.uri().path(), "rejected: unauthorized");
            ApiError::unauthorized().into_response()
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/places", get(places))
        .route("/api/metrics", get(metrics))
        .route("/api/frames", get(frames))
        .route("/api/series", get(series))
        .route("/api/timeline", get(timeline))
        .route("/api/peak", get(peak_handler))
        .route("/api/stream", get(stream))
        .fallback(|| async { ApiError::not_found() })
        .layer(middleware::from_fn_with_state(state.clone(), require_key))
        .with_state(state)
}

async fn places(State(s): State<AppState>) -> Json<Value> {
    Json(places_to_geojson(s.store.catalog().places()))
}

async fn metrics(State(s): State<AppState>) -> Json<Value> {
    Json(json!(s.store.catalog().metrics()))
}

async fn frames(State(s): State<AppState>, p: Params) -> Result<Json<Vec<Frame>>, ApiError> {
    let metric = s.known_metric(p.required("metric")?)?;
    let (from, to) = p.range()?;
    let staleness = p.positive("staleness")?.unwrap_or_else(|| s.staleness_of(metric));
    let times: Vec<Timestamp> = match p.positive("step")? {
        Some(step) => {
            if from == Timestamp::MIN || to == Timestamp::MAX {
                return Err(ApiError::bad_request("missing_param", "step requires both from and to"));
            }
            let n = (to.unix() - from.unix()) / step + 1;
            if n as usize > MAX_FRAMES {
                return Err(ApiError::bad_request("too_many_frames", format!("at most {MAX_FRAMES} frames per request (got {n})")));
            }
            (0..n).map(|k| from.plus_secs(k * step)).collect()
        }
        None => sample_times(&s.store, metric, from, to)?,
    };
    if times.len() > MAX_FRAMES {
        return Err(ApiError::bad_request("too_many_frames", format!("at most {MAX_FRAMES} frames per request (got {})", times.len())));
    }
    let view = s.store.read();
    let frames = times
        .into_iter()
        .map(|t| crowdlens_core::analytics::frame_at_view(&view, metric, t, staleness))
        .collect::<Result<_, _>>()?;
    Ok(Json(frames))
}

async fn series(State(s): State<AppState>, p: Params) -> Result<Json<Value>, ApiError> {
    let ids: Vec<&str> = p.required("metrics")?.split(',').map(str::trim).filter(|m| !m.is_empty()).collect();
    if ids.is_empty() {
        return Err(ApiError::bad_request("missing_param", "missing parameter \"metrics\""));
    }
    if ids.len() > MAX_SERIES_METRICS {
        return Err(ApiError::bad_request("too_many_metrics", "at most two metrics"));
    }
    let (from, to) = p.range()?;
    let region = p.region()?;
    let agg = p.aggregation()?;
    let out = ids
        .iter()
        .map(|m| aggregate_series(&s.store, s.known_metric(m)?, from, to, region.as_ref(), agg).map_err(ApiError::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(json!(out)))
}

async fn timeline(State(s): State<AppState>, p: Params) -> Result<Json<Value>, ApiError> {
    let metric = s.known_metric(p.required("metric")?)?;
    let (from, to) = p.range()?;
    let region = p.region()?;
    let sums = sum_series(&s.store, metric, from, to, region.as_ref())?;
    let hues = match timeline_hues(&sums) {
        Ok(h) => h,
        Err(AnalyticsError::NoData) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(Json(json!({"metric_id": metric, "sums": sums.points, "hues": hues})))
}

async fn peak_handler(State(s): State<AppState>, p: Params) -> Result<Json<Value>, ApiError> {
    let metric = s.known_metric(p.required("metric")?)?;
    let (from, to) = p.range()?;
    let region = p.region()?;
    let (t, value) = peak(&sum_series(&s.store, metric, from, to, region.as_ref())?)?;
    Ok(Json(json!({"metric_id": metric, "t": t, "value": value})))
}

struct Subscription {
    rx: tokio::sync::broadcast::Receiver<Arc<Frame>>,
    keys: Arc<KeyStore>,
    key_id: String,
    heartbeat: tokio::time::Interval,
    done: bool,
}

fn event(name: &str, data: &impl serde::Serialize) -> Event {
    Event::default().event(name).data(serde_json::to_string(data).expect("event payload serializes"))
}

/// `frame` events as frames arrive, `ping` after each idle heartbeat
/// interval. The stream ends after an `overflow` event when the subscriber
/// fell too far behind, after a `revoked` event when its key is revoked,
/// and silently when the server shuts down.
fn frame_events(sub: Subscription) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(sub, |mut sub| async move {
        if sub.done {
            return None;
        }
        let ev = tokio::select! {
            r = sub.rx.recv() => match r {
                Ok(frame) => {
                    sub.heartbeat.reset();
                    if sub.keys.is_active(&sub.key_id) {
                        event("frame", &*frame)
                    } else {
                        sub.done = true;
                        event("revoked", &json!({}))
                    }
                }
                Err(RecvError::Lagged(missed)) => {
                    tracing::warn!(key_id = %sub.key_id, missed, "stream subscriber overflowed; disconnecting");
                    sub.done = true;
                    event("overflow", &json!({"missed": missed}))
                }
                Err(RecvError::Closed) => return None,
            },
            _ = sub.heartbeat.tick() => {
                if sub.keys.is_active(&sub.key_id) {
                    event("ping", &json!({"t": Timestamp::now()}))
                } else {
                    sub.done = true;
                    event("revoked", &json!({}))
                }
            }
        };
        Some((Ok(ev), sub))
    })
}

async fn stream(State(s): State<AppState>, Extension(KeyId(key_id)): Extension<KeyId>, p: Params) -> Result<Response, ApiError> {
    let metric = s.known_metric(p.required("metric")?)?;
    // Subscribe before responding: frames published after the response
    // headers reach the client are never missed.
    let rx = s.hub.subscribe(metric);
    let mut heartbeat = tokio::time::interval_at(tokio::time::Instant::now() + s.heartbeat, s.heartbeat);
    heartbeat.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    tracing::info!(key_id = %key_id, metric, "stream opened");
    let sub = Subscription { rx, keys: s.keys.clone(), key_id, heartbeat, done: false };
    Ok(Sse::new(frame_events(sub)).into_response())
}

/// The frame published for `metric_id` after a batch at `t`.
pub fn live_frame(state: &AppState, metric_id: &str, t: Timestamp) -> Result<Frame, AnalyticsError> {
    frame_at(&state.store, metric_id, t, state.staleness_of(metric_id))
}
