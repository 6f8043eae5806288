//! HTTP API and live frame stream over a [`crowdlens_core::Store`].
//!
//! Every request needs `X-Api-Key: <key_id>.<secret>`. Endpoints:
//!
//! | path | parameters | body |
//! |---|---|---|
//! | `/api/places` | | GeoJSON FeatureCollection |
//! | `/api/metrics` | | metric definitions |
//! | `/api/frames` | `metric`, `from`, `to`, `step`, `staleness` | frames |
//! | `/api/series` | `metrics` (one or two, comma separated), `from`, `to`, `region`, `agg` | one series per metric |
//! | `/api/timeline` | `metric`, `from`, `to`, `region` | sums and hue stops |
//! | `/api/peak` | `metric`, `from`, `to`, `region` | peak instant and value |
//! | `/api/stream` | `metric` | server-sent events |
//!
//! Errors are `{"error": {"code", "message"}}`.

pub mod api;
pub mod error;
pub mod hub;
pub mod ingest;
pub mod keystore;
pub mod params;
pub mod server;

pub use api::{router, AppState, KeyId, API_KEY_HEADER};
pub use error::ApiError;
pub use hub::Hub;
pub use keystore::{ApiKeyRecord, IssuedKey, KeyStore, KeyStoreError, KeySummary};
pub use server::{start, start_with_state, RunningServer, ServeError};
