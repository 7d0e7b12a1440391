//! Events published on the streaming channel.
//!
//! One JSON object per line on `/stream`:
//!
//! ```text
//! {"event_id": 7, "t_ms": 12300, "type": "alert", "alert": {...}}
//! ```
//!
//! `event_id` increases by one per event, so a reconnecting client can drop
//! anything it has already seen.

use serde::{Deserialize, Serialize};

use crate::monitor::{Alert, QosReport, Recommendation};
use crate::sim::{MetricSample, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    MetricSample { xapp_id: String, sample: MetricSample },
    Alert { alert: Alert },
    QosReport { report: QosReport },
    StageChange { session_id: String, from: String, to: String },
    Recommendation { session_id: String, recommendations: Vec<Recommendation> },
    AgentMessage { session_id: String, text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: u64,
    pub t_ms: SimTime,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Pending events in publication order.
#[derive(Debug, Clone, Default)]
pub struct Outbox {
    next_id: u64,
    pending: Vec<Event>,
}

impl Outbox {
    pub fn push(&mut self, t_ms: SimTime, kind: EventKind) -> u64 {
        self.next_id += 1;
        self.pending.push(Event {
            event_id: self.next_id,
            t_ms,
            kind,
        });
        self.next_id
    }

    pub fn drain(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.pending)
    }

    pub fn last_id(&self) -> u64 {
        self.next_id
    }
}
