//! Deterministic tick-based simulator of cells, UEs, slices and flows.
//!
//! Every tick (10 ms of simulated time) each cell's uplink and downlink
//! capacity is divided among its flows by [`allocate_capacity`], and one
//! [`MetricSample`] per flow is derived from the allocation:
//!
//! ```text
//! rho      = min(0.99, unguaranteed demand / unguaranteed service rate)
//! latency  = base + 5 ms * rho / (1 - rho)
//! loss     = (offered - allocated) / offered   once overloaded for
//!            `buffer_cap_ratio` consecutive ticks, else 0
//! jitter   = 0.2 * (latency - base)
//! available = allocated > 0 && destination service running
//! ```
//!
//! The unguaranteed demand is the part of the flow's load not covered by its
//! GBR grant; its service rate is the flow's non-GBR allocation plus any
//! capacity the cell left idle this tick.

mod alloc;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use alloc::{allocate_capacity, effective_demand};

use crate::scenario::{ScenarioConfig, ScenarioError};

/// Simulated time in milliseconds.
pub type SimTime = u64;

pub const TICK_MS: SimTime = 10;

/// Queueing delay scale in the latency curve.
pub const QUEUE_DELAY_MS: f64 = 5.0;
/// Utilization cap for the delay term.
pub const RHO_CAP: f64 = 0.99;
pub const JITTER_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Uplink, Direction::Downlink];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub slice_id: String,
    pub scheduling_weight: f64,
    pub dedicated_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub cell_id: String,
    pub capacity_dl_mbps: f64,
    pub capacity_ul_mbps: f64,
    #[serde(default)]
    pub slices: Vec<SliceConfig>,
    /// Consecutive overloaded ticks tolerated before the buffer overflows.
    #[serde(default = "Cell::default_buffer_cap_ratio")]
    pub buffer_cap_ratio: f64,
}

impl Cell {
    fn default_buffer_cap_ratio() -> f64 {
        3.0
    }

    pub fn capacity(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Uplink => self.capacity_ul_mbps,
            Direction::Downlink => self.capacity_dl_mbps,
        }
    }

    pub fn slice(&self, slice_id: &str) -> Option<&SliceConfig> {
        self.slices.iter().find(|s| s.slice_id == slice_id)
    }

    pub fn dedicated_sum(&self) -> f64 {
        self.slices.iter().map(|s| s.dedicated_ratio).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ue {
    pub ue_id: String,
    pub cell_id: String,
    #[serde(default)]
    pub device_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub node_id: String,
    pub cell_id: String,
    pub base_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flow {
    pub flow_id: String,
    pub ue_id: String,
    pub direction: Direction,
    pub slice_id: String,
    pub offered_mbps: f64,
    #[serde(default)]
    pub gbr_mbps: f64,
    #[serde(default)]
    pub mbr_mbps: Option<f64>,
    #[serde(default = "Flow::default_priority")]
    pub priority_level: u8,
    pub dest_node_id: String,
}

impl Flow {
    pub const DEFAULT_PRIORITY: u8 = 9;

    fn default_priority() -> u8 {
        Self::DEFAULT_PRIORITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub t_ms: SimTime,
    pub flow_id: String,
    pub latency_ms: f64,
    pub throughput_mbps: f64,
    pub loss_rate: f64,
    pub jitter_ms: f64,
    pub available: bool,
}

impl MetricSample {
    /// `available` reads as 1.0 or 0.0.
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::LatencyMs => self.latency_ms,
            Metric::ThroughputMbps => self.throughput_mbps,
            Metric::LossRate => self.loss_rate,
            Metric::JitterMs => self.jitter_ms,
            Metric::Available => f64::from(u8::from(self.available)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LatencyMs,
    ThroughputMbps,
    LossRate,
    JitterMs,
    Available,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::LatencyMs,
        Metric::ThroughputMbps,
        Metric::LossRate,
        Metric::JitterMs,
        Metric::Available,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::LatencyMs => "latency_ms",
            Metric::ThroughputMbps => "throughput_mbps",
            Metric::LossRate => "loss_rate",
            Metric::JitterMs => "jitter_ms",
            Metric::Available => "available",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub cells: Vec<Cell>,
    pub ues: Vec<Ue>,
    pub links: Vec<Link>,
}

impl Topology {
    pub fn cell(&self, cell_id: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.cell_id == cell_id)
    }

    pub fn ue(&self, ue_id: &str) -> Option<&Ue> {
        self.ues.iter().find(|u| u.ue_id == ue_id)
    }

    pub fn link_latency(&self, node_id: &str, cell_id: &str) -> Option<f64> {
        self.links
            .iter()
            .find(|l| l.node_id == node_id && l.cell_id == cell_id)
            .map(|l| l.base_latency_ms)
    }

    pub fn cell_of_ue(&self, ue_id: &str) -> Option<&Cell> {
        self.ue(ue_id).and_then(|u| self.cell(&u.cell_id))
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let mut ids = BTreeSet::new();
        for c in &self.cells {
            if !ids.insert(c.cell_id.as_str()) {
                return Err(ScenarioError::Invalid(format!("duplicate cell id {}", c.cell_id)));
            }
            if !(c.capacity_dl_mbps > 0.0 && c.capacity_ul_mbps > 0.0) {
                return Err(ScenarioError::Invalid(format!("cell {} capacities must be > 0", c.cell_id)));
            }
            for s in &c.slices {
                validate_slice(s).map_err(|m| ScenarioError::Invalid(format!("cell {}: {m}", c.cell_id)))?;
            }
            if c.dedicated_sum() > 1.0 {
                return Err(ScenarioError::Invalid(format!(
                    "cell {} dedicated ratios sum above 1",
                    c.cell_id
                )));
            }
        }
        let mut ue_ids = BTreeSet::new();
        for u in &self.ues {
            if !ue_ids.insert(u.ue_id.as_str()) {
                return Err(ScenarioError::Invalid(format!("duplicate ue id {}", u.ue_id)));
            }
            if self.cell(&u.cell_id).is_none() {
                return Err(ScenarioError::Reference(format!(
                    "ue {} references unknown cell {}",
                    u.ue_id, u.cell_id
                )));
            }
        }
        for l in &self.links {
            if self.cell(&l.cell_id).is_none() {
                return Err(ScenarioError::Reference(format!(
                    "link {} references unknown cell {}",
                    l.node_id, l.cell_id
                )));
            }
            if !(l.base_latency_ms > 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "link {}->{} base_latency_ms must be > 0",
                    l.node_id, l.cell_id
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_slice(s: &SliceConfig) -> Result<(), String> {
    if !(s.scheduling_weight.is_finite() && s.scheduling_weight >= 0.0) {
        return Err(format!("slice {} scheduling_weight must be finite and >= 0", s.slice_id));
    }
    if !(s.dedicated_ratio.is_finite() && (0.0..=1.0).contains(&s.dedicated_ratio)) {
        return Err(format!("slice {} dedicated_ratio must be in [0,1]", s.slice_id));
    }
    Ok(())
}

/// Edge nodes contribute a link per attached cell unless one is declared.
pub fn build_topology(scenario: &ScenarioConfig) -> Result<Topology, ScenarioError> {
    let mut links = scenario.links.clone();
    for node in &scenario.edge_nodes {
        for (cell_id, latency) in &node.attach_latency_ms {
            if !links.iter().any(|l| l.node_id == node.node_id && l.cell_id == *cell_id) {
                links.push(Link {
                    node_id: node.node_id.clone(),
                    cell_id: cell_id.clone(),
                    base_latency_ms: *latency,
                });
            }
        }
    }
    let topo = Topology {
        cells: scenario.cells.clone(),
        ues: scenario.ues.clone(),
        links,
    };
    topo.validate()?;
    Ok(topo)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("advance of {0} ms is not a positive multiple of the {TICK_MS} ms tick")]
    TickMisaligned(SimTime),
    #[error("unknown flow {0}")]
    UnknownFlow(String),
    #[error("window {window_ms} ms exceeds retained history of {retained_ms} ms")]
    WindowTooLarge { window_ms: SimTime, retained_ms: SimTime },
    #[error("unknown cell {0}")]
    UnknownCell(String),
    #[error("unknown slice {slice_id} in cell {cell_id}")]
    UnknownSlice { cell_id: String, slice_id: String },
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
}

/// Capacity in use on one cell/direction during the last tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellLoad {
    pub capacity_mbps: f64,
    pub allocated_mbps: f64,
    pub offered_mbps: f64,
}

impl CellLoad {
    pub fn utilization(&self) -> f64 {
        if self.capacity_mbps > 0.0 {
            (self.allocated_mbps / self.capacity_mbps).min(1.0)
        } else {
            0.0
        }
    }
}

/// `rho` as used by the latency curve.
pub fn utilization_term(demand: f64, gbr_granted: f64, allocated: f64, idle: f64) -> f64 {
    let unguaranteed = (demand - gbr_granted).max(0.0);
    if unguaranteed <= 0.0 {
        return 0.0;
    }
    let rate = (allocated - gbr_granted).max(0.0) + idle.max(0.0);
    if rate <= 0.0 {
        return RHO_CAP;
    }
    (unguaranteed / rate).min(RHO_CAP)
}

pub fn latency_for(base_ms: f64, rho: f64) -> f64 {
    let rho = rho.clamp(0.0, RHO_CAP);
    base_ms + QUEUE_DELAY_MS * rho / (1.0 - rho)
}

#[derive(Debug, Clone)]
struct Noise {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Noise {
    fn factor(&mut self) -> f64 {
        if self.sigma <= 0.0 {
            return 1.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        (1.0 + self.sigma * z).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    topology: Topology,
    flows: BTreeMap<String, Flow>,
    clock: SimTime,
    history: BTreeMap<String, VecDeque<MetricSample>>,
    retention_ms: SimTime,
    overload_streak: BTreeMap<String, u32>,
    service_up: BTreeMap<String, bool>,
    loads: BTreeMap<(String, Direction), CellLoad>,
    noise: Noise,
}

impl Simulator {
    pub fn new(topology: Topology, flows: Vec<Flow>, seed: u64, noise_sigma: f64, retention_ms: SimTime) -> Result<Self, SimError> {
        let mut sim = Self {
            topology,
            flows: BTreeMap::new(),
            clock: 0,
            history: BTreeMap::new(),
            retention_ms,
            overload_streak: BTreeMap::new(),
            service_up: BTreeMap::new(),
            loads: BTreeMap::new(),
            noise: Noise {
                sigma: noise_sigma.max(0.0),
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
        };
        for f in flows {
            sim.add_flow(f)?;
        }
        Ok(sim)
    }

    pub fn from_scenario(scenario: &ScenarioConfig, seed: u64) -> Result<Self, ScenarioError> {
        let topo = build_topology(scenario)?;
        Self::new(
            topo,
            scenario.flows.clone(),
            seed,
            scenario.sim.noise_sigma,
            scenario.sim.history_ms,
        )
        .map_err(|e| match e {
            SimError::UnknownCell(_) | SimError::UnknownSlice { .. } => ScenarioError::Reference(e.to_string()),
            other => ScenarioError::Invalid(other.to_string()),
        })
    }

    pub fn check_flow(&self, f: &Flow) -> Result<(), SimError> {
        let cell = self
            .topology
            .cell_of_ue(&f.ue_id)
            .ok_or_else(|| SimError::InvalidFlow(format!("flow {} references unknown ue {}", f.flow_id, f.ue_id)))?;
        if cell.slice(&f.slice_id).is_none() {
            return Err(SimError::UnknownSlice {
                cell_id: cell.cell_id.clone(),
                slice_id: f.slice_id.clone(),
            });
        }
        if self.topology.link_latency(&f.dest_node_id, &cell.cell_id).is_none() {
            return Err(SimError::InvalidFlow(format!(
                "flow {}: no link from {} to cell {}",
                f.flow_id, f.dest_node_id, cell.cell_id
            )));
        }
        if !(f.offered_mbps >= 0.0 && f.gbr_mbps >= 0.0) {
            return Err(SimError::InvalidFlow(format!("flow {}: negative rate", f.flow_id)));
        }
        if !(1..=15).contains(&f.priority_level) {
            return Err(SimError::InvalidFlow(format!("flow {}: priority_level out of 1..=15", f.flow_id)));
        }
        Ok(())
    }

    pub fn add_flow(&mut self, f: Flow) -> Result<(), SimError> {
        self.check_flow(&f)?;
        if self.flows.contains_key(&f.flow_id) {
            return Err(SimError::InvalidFlow(format!("duplicate flow id {}", f.flow_id)));
        }
        self.flows.insert(f.flow_id.clone(), f);
        Ok(())
    }

    /// Replace a flow's attributes; rejected replacements leave it untouched.
    pub fn replace_flow(&mut self, f: Flow) -> Result<(), SimError> {
        if !self.flows.contains_key(&f.flow_id) {
            return Err(SimError::UnknownFlow(f.flow_id));
        }
        self.check_flow(&f)?;
        self.flows.insert(f.flow_id.clone(), f);
        Ok(())
    }

    pub fn set_offered(&mut self, flow_id: &str, offered_mbps: f64) -> Result<(), SimError> {
        let f = self
            .flows
            .get_mut(flow_id)
            .ok_or_else(|| SimError::UnknownFlow(flow_id.to_string()))?;
        f.offered_mbps = offered_mbps.max(0.0);
        Ok(())
    }

    pub fn set_slice(&mut self, cell_id: &str, slice_id: &str, weight: Option<f64>, ratio: Option<f64>) -> Result<(), SimError> {
        let cell = self
            .topology
            .cells
            .iter_mut()
            .find(|c| c.cell_id == cell_id)
            .ok_or_else(|| SimError::UnknownCell(cell_id.to_string()))?;
        let slice = cell
            .slices
            .iter_mut()
            .find(|s| s.slice_id == slice_id)
            .ok_or_else(|| SimError::UnknownSlice {
                cell_id: cell_id.to_string(),
                slice_id: slice_id.to_string(),
            })?;
        if let Some(w) = weight {
            slice.scheduling_weight = w;
        }
        if let Some(r) = ratio {
            slice.dedicated_ratio = r;
        }
        Ok(())
    }

    /// Mark whether the service behind `node_id` is running. Nodes never
    /// marked are plain network endpoints and always count as up.
    pub fn set_service_up(&mut self, node_id: &str, up: bool) {
        self.service_up.insert(node_id.to_string(), up);
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.flows.values()
    }

    pub fn flow(&self, flow_id: &str) -> Option<&Flow> {
        self.flows.get(flow_id)
    }

    pub fn cell_load(&self, cell_id: &str, direction: Direction) -> Option<CellLoad> {
        self.loads.get(&(cell_id.to_string(), direction)).copied()
    }

    /// Advance by `dt_ms`, returning every sample produced.
    pub fn advance(&mut self, dt_ms: SimTime) -> Result<Vec<MetricSample>, SimError> {
        if dt_ms == 0 || dt_ms % TICK_MS != 0 {
            return Err(SimError::TickMisaligned(dt_ms));
        }
        let mut out = Vec::new();
        for _ in 0..dt_ms / TICK_MS {
            out.extend(self.tick());
        }
        Ok(out)
    }

    /// Run exactly one tick.
    pub fn tick(&mut self) -> Vec<MetricSample> {
        self.clock += TICK_MS;
        let t = self.clock;
        let mut samples = Vec::with_capacity(self.flows.len());

        for cell in &self.topology.cells {
            for dir in Direction::BOTH {
                let flows: Vec<Flow> = self
                    .flows
                    .values()
                    .filter(|f| f.direction == dir && self.topology.ue(&f.ue_id).is_some_and(|u| u.cell_id == cell.cell_id))
                    .cloned()
                    .collect();
                let alloc = allocate_capacity(cell, &flows, dir);
                let allocated_total: f64 = alloc.values().sum();
                let offered_total: f64 = flows.iter().map(|f| f.offered_mbps).sum();
                let capacity = cell.capacity(dir);
                let idle = (capacity - allocated_total).max(0.0);
                self.loads.insert(
                    (cell.cell_id.clone(), dir),
                    CellLoad {
                        capacity_mbps: capacity,
                        allocated_mbps: allocated_total,
                        offered_mbps: offered_total,
                    },
                );

                for f in &flows {
                    let allocated = alloc.get(&f.flow_id).copied().unwrap_or(0.0);
                    let demand = effective_demand(f);
                    let gbr_granted = f.gbr_mbps.min(demand).min(allocated);
                    let rho = utilization_term(demand, gbr_granted, allocated, idle);
                    let base = self.topology.link_latency(&f.dest_node_id, &cell.cell_id).unwrap_or(0.0);

                    let overloaded = allocated < f.offered_mbps;
                    let streak = self.overload_streak.entry(f.flow_id.clone()).or_insert(0);
                    *streak = if overloaded { *streak + 1 } else { 0 };
                    let loss_rate = if overloaded && f64::from(*streak) >= cell.buffer_cap_ratio && f.offered_mbps > 0.0 {
                        ((f.offered_mbps - allocated) / f.offered_mbps).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };

                    let queue = latency_for(base, rho) - base;
                    let throughput = allocated * self.noise.factor();
                    let queue = queue * self.noise.factor();
                    let latency = base + queue;
                    let up = self.service_up.get(&f.dest_node_id).copied().unwrap_or(true);

                    samples.push(MetricSample {
                        t_ms: t,
                        flow_id: f.flow_id.clone(),
                        latency_ms: latency,
                        throughput_mbps: throughput,
                        loss_rate,
                        jitter_ms: JITTER_FACTOR * queue,
                        available: allocated > 0.0 && up,
                    });
                }
            }
        }

        samples.sort_by(|a, b| a.flow_id.cmp(&b.flow_id));
        for s in &samples {
            let h = self.history.entry(s.flow_id.clone()).or_default();
            h.push_back(s.clone());
            while h.front().is_some_and(|old| old.t_ms + self.retention_ms <= t) {
                h.pop_front();
            }
        }
        samples
    }

    /// Samples for `flow_id` with `now - window_ms < t_ms <= now`.
    pub fn sample_metrics(&self, flow_id: &str, window_ms: SimTime) -> Result<Vec<MetricSample>, SimError> {
        if !self.flows.contains_key(flow_id) {
            return Err(SimError::UnknownFlow(flow_id.to_string()));
        }
        if window_ms > self.retention_ms {
            return Err(SimError::WindowTooLarge {
                window_ms,
                retained_ms: self.retention_ms,
            });
        }
        let lo = self.clock.saturating_sub(window_ms);
        Ok(self
            .history
            .get(flow_id)
            .map(|h| h.iter().filter(|s| s.t_ms > lo && s.t_ms <= self.clock).cloned().collect())
            .unwrap_or_default())
    }
}
