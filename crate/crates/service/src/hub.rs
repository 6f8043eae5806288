//! Per-metric fan-out of frames to stream subscribers.

use std::collections::HashMap;
use std::sync::Arc;

use crowdlens_core::{Frame, Timestamp};
use parking_lot::Mutex;
use tokio::sync::broadcast;

struct Channel {
    tx: broadcast::Sender<Arc<Frame>>,
    last_t: Option<Timestamp>,
}

/// Each metric gets a bounded broadcast channel. A subscriber that falls
/// more than `capacity` frames behind observes a lag error on its next
/// receive instead of silently skipping frames.
pub struct Hub {
    capacity: usize,
    channels: Mutex<HashMap<String, Channel>>,
    closed: Mutex<bool>,
}

impl Hub {
    pub fn new(capacity: usize) -> Self {
        Hub { capacity: capacity.max(1), channels: Mutex::new(HashMap::new()), closed: Mutex::new(false) }
    }

    pub fn subscribe(&self, metric_id: &str) -> broadcast::Receiver<Arc<Frame>> {
        if *self.closed.lock() {
            // A receiver whose sender is already gone reports closed at once.
            return broadcast::channel(1).1;
        }
        let mut channels = self.channels.lock();
        let ch = channels
            .entry(metric_id.to_string())
            .or_insert_with(|| Channel { tx: broadcast::channel(self.capacity).0, last_t: None });
        ch.tx.subscribe()
    }

    pub fn subscriber_count(&self, metric_id: &str) -> usize {
        self.channels.lock().get(metric_id).map_or(0, |c| c.tx.receiver_count())
    }

    /// Delivers `frame` to the current subscribers of its metric and returns
    /// how many there were. Frames older than the last one published for
    /// the metric are not delivered, so each subscriber sees non-decreasing
    /// timestamps.
    pub fn publish(&self, frame: Frame) -> usize {
        let mut channels = self.channels.lock();
        let Some(ch) = channels.get_mut(&frame.metric_id) else {
            return 0;
        };
        if ch.last_t.is_some_and(|last| frame.t < last) {
            tracing::debug!(metric = %frame.metric_id, t = %frame.t, "late frame not streamed");
            return 0;
        }
        ch.last_t = Some(frame.t);
        ch.tx.send(Arc::new(frame)).unwrap_or(0)
    }

    /// Ends every open stream; later subscriptions end immediately.
    pub fn close(&self) {
        *self.closed.lock() = true;
        self.channels.lock().clear();
    }
}
