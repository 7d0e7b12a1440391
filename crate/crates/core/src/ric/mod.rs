//! Near-RT RIC stand-in: E2-style subscriptions, indications and slice
//! controls, plus the runtime hosting monitoring xApps.
//!
//! The RIC is driven once per simulator tick with that tick's samples. A
//! subscription created at `t0` delivers at `t0 + k * period_ms`; each
//! indication carries one sample per selected flow, averaged over the period
//! with availability combined by logical AND.

pub mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::monitor::{Alert, MonitorError, XAppMonitor, XAppSpec};
use crate::sim::{validate_slice, Cell, Flow, Metric, MetricSample, SimTime, TICK_MS};

/// The one RAN service model offered to xApps.
pub const SERVICE_MODEL: &str = "kpm-lite";
pub const MIN_CONTROL_DELAY_TICKS: u32 = 1;
pub const MAX_CONTROL_DELAY_TICKS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    Ues { ue_ids: Vec<String> },
    Slice { slice_id: String },
}

impl Selector {
    pub fn matches(&self, flow: &Flow) -> bool {
        match self {
            Selector::Ues { ue_ids } => ue_ids.iter().any(|u| *u == flow.ue_id),
            Selector::Slice { slice_id } => flow.slice_id == *slice_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    #[serde(default)]
    pub sub_id: String,
    pub xapp_id: String,
    pub metric_names: Vec<Metric>,
    pub flow_selector: Selector,
    pub period_ms: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indication {
    pub sub_id: String,
    pub xapp_id: String,
    pub seq: u64,
    pub t_ms: SimTime,
    pub samples: Vec<MetricSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRequest {
    #[serde(default)]
    pub request_id: String,
    pub cell_id: String,
    pub slice_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_scheduling_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_dedicated_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAck {
    pub request_id: String,
    pub cell_id: String,
    pub slice_id: String,
    pub requested_at_ms: SimTime,
    /// Sim time (ms) from which the new slice configuration is in force.
    pub effect_tick: SimTime,
}

impl ControlAck {
    pub fn delay_ms(&self) -> SimTime {
        self.effect_tick - self.requested_at_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub request: ControlRequest,
    pub ack: ControlAck,
    #[serde(default)]
    pub applied_at_ms: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XAppState {
    Loaded,
    Running,
    Stopped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XAppInstance {
    pub xapp_id: String,
    pub spec: XAppSpec,
    pub state: XAppState,
    pub subscriptions: Vec<String>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RicError {
    #[error("selector matches no flow")]
    EmptySelector,
    #[error("period {0} ms is not a positive multiple of {TICK_MS} ms")]
    BadPeriod(SimTime),
    #[error("subscription must name at least one metric")]
    NoMetrics,
    #[error("unknown cell {0}")]
    UnknownCell(String),
    #[error("unknown slice {slice_id} in cell {cell_id}")]
    UnknownSlice { cell_id: String, slice_id: String },
    #[error("control out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    SpecInvalid(#[from] MonitorError),
    #[error("xApp {0} not found")]
    NotFound(String),
    #[error("subscription {0} not found")]
    UnknownSubscription(String),
}

#[derive(Debug, Clone, Default)]
struct Accum {
    n: u32,
    latency: f64,
    throughput: f64,
    loss: f64,
    jitter: f64,
    available: bool,
}

impl Accum {
    fn add(&mut self, s: &MetricSample) {
        if self.n == 0 {
            self.available = true;
        }
        self.n += 1;
        self.latency += s.latency_ms;
        self.throughput += s.throughput_mbps;
        self.loss += s.loss_rate;
        self.jitter += s.jitter_ms;
        self.available &= s.available;
    }

    fn mean(&self, flow_id: &str, t_ms: SimTime) -> MetricSample {
        let n = f64::from(self.n);
        MetricSample {
            t_ms,
            flow_id: flow_id.to_string(),
            latency_ms: self.latency / n,
            throughput_mbps: self.throughput / n,
            loss_rate: self.loss / n,
            jitter_ms: self.jitter / n,
            available: self.available,
        }
    }
}

#[derive(Debug, Clone)]
struct ActiveSub {
    sub: Subscription,
    start_ms: SimTime,
    seq: u64,
    acc: BTreeMap<String, Accum>,
}

/// What one tick produced for one subscription.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub indication: Indication,
    /// Set when the subscriber is a hosted xApp.
    pub alerts: Vec<Alert>,
    pub hosted: bool,
}

#[derive(Debug, Clone)]
struct Hosted {
    instance: XAppInstance,
    monitor: XAppMonitor,
}

#[derive(Debug, Clone)]
pub struct Ric {
    control_delay_ticks: u32,
    subs: BTreeMap<String, ActiveSub>,
    xapps: BTreeMap<String, Hosted>,
    controls: Vec<ControlRecord>,
    next_sub: u64,
    next_xapp: u64,
    next_control: u64,
}

impl Ric {
    pub fn new(control_delay_ticks: u32) -> Self {
        Self {
            control_delay_ticks: control_delay_ticks.clamp(MIN_CONTROL_DELAY_TICKS, MAX_CONTROL_DELAY_TICKS),
            subs: BTreeMap::new(),
            xapps: BTreeMap::new(),
            controls: Vec::new(),
            next_sub: 0,
            next_xapp: 0,
            next_control: 0,
        }
    }

    pub fn service_models(&self) -> Vec<&'static str> {
        vec![SERVICE_MODEL]
    }

    pub fn control_delay_ticks(&self) -> u32 {
        self.control_delay_ticks
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &Subscription> {
        self.subs.values().map(|s| &s.sub)
    }

    /// Register `s` at sim time `now`; `flows` are the flows currently known.
    pub fn subscribe(&mut self, mut s: Subscription, flows: &[Flow], now: SimTime) -> Result<String, RicError> {
        if s.period_ms < TICK_MS || s.period_ms % TICK_MS != 0 {
            return Err(RicError::BadPeriod(s.period_ms));
        }
        if s.metric_names.is_empty() {
            return Err(RicError::NoMetrics);
        }
        if !flows.iter().any(|f| s.flow_selector.matches(f)) {
            return Err(RicError::EmptySelector);
        }
        self.next_sub += 1;
        s.sub_id = format!("sub-{}", self.next_sub);
        let id = s.sub_id.clone();
        self.subs.insert(
            id.clone(),
            ActiveSub {
                sub: s,
                start_ms: now,
                seq: 0,
                acc: BTreeMap::new(),
            },
        );
        Ok(id)
    }

    pub fn unsubscribe(&mut self, sub_id: &str) -> Result<(), RicError> {
        self.subs
            .remove(sub_id)
            .map(|_| ())
            .ok_or_else(|| RicError::UnknownSubscription(sub_id.to_string()))
    }

    /// Validate against the cell's current slices and queue the change.
    pub fn send_control(&mut self, mut c: ControlRequest, cell: Option<&Cell>, now: SimTime) -> Result<ControlAck, RicError> {
        let cell = cell.ok_or_else(|| RicError::UnknownCell(c.cell_id.clone()))?;
        let slice = cell.slice(&c.slice_id).ok_or_else(|| RicError::UnknownSlice {
            cell_id: c.cell_id.clone(),
            slice_id: c.slice_id.clone(),
        })?;
        if c.new_scheduling_weight.is_none() && c.new_dedicated_ratio.is_none() {
            return Err(RicError::OutOfRange("control sets no field".into()));
        }
        let mut next = slice.clone();
        if let Some(w) = c.new_scheduling_weight {
            next.scheduling_weight = w;
        }
        if let Some(r) = c.new_dedicated_ratio {
            next.dedicated_ratio = r;
        }
        validate_slice(&next).map_err(RicError::OutOfRange)?;
        let ratio_sum = cell.dedicated_sum() - slice.dedicated_ratio + next.dedicated_ratio;
        if ratio_sum > 1.0 + 1e-12 {
            return Err(RicError::OutOfRange(format!(
                "dedicated ratios in {} would sum to {ratio_sum}",
                c.cell_id
            )));
        }
        self.next_control += 1;
        if c.request_id.is_empty() {
            c.request_id = format!("ctl-{}", self.next_control);
        }
        let ack = ControlAck {
            request_id: c.request_id.clone(),
            cell_id: c.cell_id.clone(),
            slice_id: c.slice_id.clone(),
            requested_at_ms: now,
            effect_tick: now + SimTime::from(self.control_delay_ticks) * TICK_MS,
        };
        self.controls.push(ControlRecord {
            request: c,
            ack: ack.clone(),
            applied_at_ms: None,
        });
        Ok(ack)
    }

    /// Controls whose effect time has arrived, marked applied at `now`.
    pub fn take_due_controls(&mut self, now: SimTime) -> Vec<ControlRequest> {
        self.controls
            .iter_mut()
            .filter(|r| r.applied_at_ms.is_none() && r.ack.effect_tick <= now)
            .map(|r| {
                r.applied_at_ms = Some(now);
                r.request.clone()
            })
            .collect()
    }

    pub fn controls(&self) -> &[ControlRecord] {
        &self.controls
    }

    pub fn deploy_xapp(&mut self, spec: XAppSpec, flows: &[Flow], now: SimTime) -> Result<String, RicError> {
        spec.validate()?;
        let xapp_id = format!("xapp-{}", self.next_xapp + 1);
        let sub = Subscription {
            sub_id: String::new(),
            xapp_id: xapp_id.clone(),
            metric_names: spec.metrics.clone(),
            flow_selector: spec.selector.clone(),
            period_ms: spec.period_ms,
        };
        let sub_id = self.subscribe(sub, flows, now)?;
        self.next_xapp += 1;
        let monitor = XAppMonitor::new(xapp_id.clone(), spec.clone())?;
        self.xapps.insert(
            xapp_id.clone(),
            Hosted {
                instance: XAppInstance {
                    xapp_id: xapp_id.clone(),
                    spec,
                    state: XAppState::Running,
                    subscriptions: vec![sub_id],
                },
                monitor,
            },
        );
        Ok(xapp_id)
    }

    pub fn stop_xapp(&mut self, xapp_id: &str) -> Result<(), RicError> {
        let h = self
            .xapps
            .get_mut(xapp_id)
            .ok_or_else(|| RicError::NotFound(xapp_id.to_string()))?;
        for sub in h.instance.subscriptions.drain(..) {
            self.subs.remove(&sub);
        }
        h.instance.state = XAppState::Stopped;
        Ok(())
    }

    pub fn xapp(&self, xapp_id: &str) -> Result<&XAppInstance, RicError> {
        self.xapps
            .get(xapp_id)
            .map(|h| &h.instance)
            .ok_or_else(|| RicError::NotFound(xapp_id.to_string()))
    }

    pub fn xapps(&self) -> impl Iterator<Item = &XAppInstance> {
        self.xapps.values().map(|h| &h.instance)
    }

    pub fn monitor(&self, xapp_id: &str) -> Result<&XAppMonitor, RicError> {
        self.xapps
            .get(xapp_id)
            .map(|h| &h.monitor)
            .ok_or_else(|| RicError::NotFound(xapp_id.to_string()))
    }

    pub fn monitors(&self) -> impl Iterator<Item = &XAppMonitor> {
        self.xapps.values().map(|h| &h.monitor)
    }

    pub fn record_inference(&mut self, xapp_id: &str, t_ms: SimTime, latency_ms: f64) -> Result<(), RicError> {
        let h = self
            .xapps
            .get_mut(xapp_id)
            .ok_or_else(|| RicError::NotFound(xapp_id.to_string()))?;
        h.monitor.record_inference(t_ms, latency_ms);
        Ok(())
    }

    /// Absorb one tick ending at `now`. `flows` decides selector membership.
    pub fn on_tick(&mut self, now: SimTime, samples: &[MetricSample], flows: &[Flow]) -> Vec<Delivery> {
        let by_id: BTreeMap<&str, &Flow> = flows.iter().map(|f| (f.flow_id.as_str(), f)).collect();
        let mut out = Vec::new();
        for active in self.subs.values_mut() {
            if now <= active.start_ms {
                continue;
            }
            for s in samples {
                if by_id.get(s.flow_id.as_str()).is_some_and(|f| active.sub.flow_selector.matches(f)) {
                    active.acc.entry(s.flow_id.clone()).or_default().add(s);
                }
            }
            if (now - active.start_ms) % active.sub.period_ms != 0 {
                continue;
            }
            active.seq += 1;
            let acc = std::mem::take(&mut active.acc);
            out.push(Indication {
                sub_id: active.sub.sub_id.clone(),
                xapp_id: active.sub.xapp_id.clone(),
                seq: active.seq,
                t_ms: now,
                samples: acc.iter().map(|(id, a)| a.mean(id, now)).collect(),
            });
        }
        out.into_iter()
            .map(|indication| match self.xapps.get_mut(&indication.xapp_id) {
                Some(h) if h.instance.state == XAppState::Running => {
                    let alerts = h.monitor.observe(indication.t_ms, &indication.samples);
                    Delivery {
                        indication,
                        alerts,
                        hosted: true,
                    }
                }
                _ => Delivery {
                    indication,
                    alerts: Vec::new(),
                    hosted: false,
                },
            })
            .collect()
    }
}
