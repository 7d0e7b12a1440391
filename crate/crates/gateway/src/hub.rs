//! Fan-out of stream events to subscribers.
//!
//! Each subscriber gets a bounded queue. A subscriber whose queue is full
//! when an event is published is disconnected rather than slowing everyone
//! else down; it can reconnect with `?after=<last event_id>` and replay from
//! the retained log.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use axum::body::Bytes;
use edgeai_core::events::Event;
use tokio::sync::mpsc;

/// Events a subscriber may fall behind by before it is dropped.
pub const SUBSCRIBER_BUFFER: usize = 8192;
/// Events kept for replay.
pub const LOG_LIMIT: usize = 500_000;

#[derive(Default)]
struct Inner {
    log: VecDeque<(u64, Bytes)>,
    subs: BTreeMap<u64, mpsc::Sender<Bytes>>,
    next_sub: u64,
    dropped: u64,
    last_id: u64,
}

#[derive(Default)]
pub struct Hub {
    inner: Mutex<Inner>,
}

pub struct Subscription {
    pub subscriber_id: u64,
    pub rx: mpsc::Receiver<Bytes>,
}

pub fn encode_line(e: &Event) -> Bytes {
    let mut s = serde_json::to_string(e).expect("events serialize");
    s.push('\n');
    Bytes::from(s)
}

impl Hub {
    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn publish(&self, events: Vec<Event>) {
        if events.is_empty() {
            return;
        }
        let mut g = self.lock();
        for e in &events {
            let line = encode_line(e);
            g.last_id = e.event_id;
            g.log.push_back((e.event_id, line.clone()));
            let mut gone = Vec::new();
            for (id, tx) in &g.subs {
                if tx.try_send(line.clone()).is_err() {
                    gone.push(*id);
                }
            }
            for id in gone {
                g.subs.remove(&id);
                g.dropped += 1;
            }
        }
        while g.log.len() > LOG_LIMIT {
            g.log.pop_front();
        }
    }

    /// Live events from now on, preceded by retained events with
    /// `event_id > after` when `after` is given.
    pub fn subscribe(&self, after: Option<u64>) -> Subscription {
        let mut g = self.lock();
        let backlog: Vec<Bytes> = match after {
            Some(a) => g.log.iter().filter(|(id, _)| *id > a).map(|(_, l)| l.clone()).collect(),
            None => Vec::new(),
        };
        let (tx, rx) = mpsc::channel(SUBSCRIBER_BUFFER + backlog.len());
        for line in backlog {
            tx.try_send(line).expect("sized for the backlog");
        }
        g.next_sub += 1;
        let id = g.next_sub;
        g.subs.insert(id, tx);
        Subscription { subscriber_id: id, rx }
    }

    pub fn subscriber_count(&self) -> usize {
        let mut g = self.lock();
        g.subs.retain(|_, tx| !tx.is_closed());
        g.subs.len()
    }

    /// Subscribers disconnected for falling behind.
    pub fn dropped_subscribers(&self) -> u64 {
        self.lock().dropped
    }

    pub fn last_event_id(&self) -> u64 {
        self.lock().last_id
    }
}
