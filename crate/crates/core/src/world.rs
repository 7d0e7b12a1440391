//! The simulated deployment as one object: radio simulator, policy store,
//! RIC, edge manager and model registry, advanced together tick by tick.
//!
//! Within a tick starting at `t`:
//!
//! 1. scheduled load changes with `t_ms <= t` are applied,
//! 2. RIC controls whose effect time is `<= t` reconfigure their slices,
//! 3. flows are re-derived from provisioned flows plus effective policy rules,
//! 4. service lifecycles advance and node reachability is updated,
//! 5. the simulator runs the tick,
//! 6. the RIC aggregates samples and delivers indications to xApps,
//! 7. on report boundaries every running xApp publishes a QoS report.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::edge::{EdgeError, EdgeManager, Endpoint, Resources, ServiceInstance, ServiceState};
use crate::events::{EventKind, Outbox};
use crate::monitor::{Alert, MonitorError, QosReport, XAppSpec};
use crate::pcf::{EffectiveRules, PolicyError, PolicyStore, QosPolicy};
use crate::registry::{FixtureBackend, HubBackend, ModelCard, ModelRegistry, RegistryError};
use crate::ric::{ControlAck, ControlRecord, ControlRequest, Indication, Ric, RicError, XAppInstance, XAppState};
use crate::scenario::{LoadChange, RegistryBackendKind, ScenarioConfig, ScenarioError};
use crate::sim::{CellLoad, Direction, Flow, SimError, SimTime, Simulator, TICK_MS};

/// Payload size of the probe request sent when an xApp tracks inference.
pub const PROBE_PAYLOAD_KB: f64 = 64.0;
const HUB_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Ric(#[from] RicError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

/// Comparable snapshot of everything the agent may change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFingerprint {
    pub policies: Vec<QosPolicy>,
    pub policy_revision: u64,
    pub instances: Vec<ServiceInstance>,
    pub controls: Vec<ControlRecord>,
    pub xapps: Vec<XAppInstance>,
    pub subscriptions: usize,
}

pub struct World {
    sim: Simulator,
    base_flows: BTreeMap<String, Flow>,
    pcf: PolicyStore,
    applied_revision: u64,
    ric: Ric,
    edge: EdgeManager,
    registry: ModelRegistry,
    load_schedule: Vec<LoadChange>,
    next_load: usize,
    report_period_ms: SimTime,
    xapp_sessions: BTreeMap<String, String>,
    external: Vec<Indication>,
    events: Outbox,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World").field("now", &self.now()).finish_non_exhaustive()
    }
}

pub fn registry_for(cfg: &ScenarioConfig) -> Result<ModelRegistry, WorldError> {
    let backend: Box<dyn crate::registry::ModelBackend> = match cfg.registry.backend {
        RegistryBackendKind::Fixture => {
            let dir = cfg
                .registry
                .fixture_dir
                .as_ref()
                .map(|d| cfg.resolve(d))
                .ok_or_else(|| ScenarioError::Invalid("registry.fixture_dir is required for the fixture backend".into()))?;
            Box::new(FixtureBackend::load(dir)?)
        }
        RegistryBackendKind::Hub => Box::new(HubBackend::new(cfg.registry.hub_url.clone(), HUB_TIMEOUT)),
    };
    Ok(ModelRegistry::new(backend).with_size_ceiling(cfg.registry.size_ceiling_mb))
}

impl World {
    pub fn from_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Self, WorldError> {
        let registry = registry_for(cfg)?;
        Self::with_registry(cfg, seed, registry)
    }

    pub fn with_registry(cfg: &ScenarioConfig, seed: u64, registry: ModelRegistry) -> Result<Self, WorldError> {
        let sim = Simulator::from_scenario(cfg, seed)?;
        let mut edge_settings = cfg.edge.clone();
        edge_settings.descriptor_dir = edge_settings.descriptor_dir.as_ref().map(|d| cfg.resolve(d));
        let mut edge = EdgeManager::new(edge_settings);
        for n in &cfg.edge_nodes {
            edge.register_node(n.clone())?;
        }
        edge.set_inference_load(cfg.inference_load.clone());
        let mut load_schedule = cfg.load_schedule.clone();
        for l in &load_schedule {
            if !cfg.flows.iter().any(|f| f.flow_id == l.flow_id) {
                return Err(ScenarioError::Reference(format!("load change for unknown flow {}", l.flow_id)).into());
            }
        }
        load_schedule.sort_by_key(|l| l.t_ms);
        let report_period_ms = cfg.monitor.report_period_ms;
        if report_period_ms == 0 || report_period_ms % TICK_MS != 0 {
            return Err(ScenarioError::Invalid(format!("report period {report_period_ms} ms is not a multiple of the tick")).into());
        }
        Ok(Self {
            sim,
            base_flows: cfg.flows.iter().map(|f| (f.flow_id.clone(), f.clone())).collect(),
            pcf: PolicyStore::new(),
            applied_revision: 0,
            ric: Ric::new(cfg.ric.control_delay_ticks),
            edge,
            registry,
            load_schedule,
            next_load: 0,
            report_period_ms,
            xapp_sessions: BTreeMap::new(),
            external: Vec::new(),
            events: Outbox::default(),
        })
    }

    pub fn now(&self) -> SimTime {
        self.sim.now()
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn pcf(&self) -> &PolicyStore {
        &self.pcf
    }

    pub fn ric(&self) -> &Ric {
        &self.ric
    }

    pub fn edge(&self) -> &EdgeManager {
        &self.edge
    }

    pub fn report_period_ms(&self) -> SimTime {
        self.report_period_ms
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn events_mut(&mut self) -> &mut Outbox {
        &mut self.events
    }

    pub fn drain_events(&mut self) -> Vec<crate::events::Event> {
        self.events.drain()
    }

    /// Indications for subscriptions not owned by a hosted xApp.
    pub fn drain_external(&mut self) -> Vec<Indication> {
        std::mem::take(&mut self.external)
    }

    pub fn flows(&self) -> Vec<Flow> {
        self.sim.flows().cloned().collect()
    }

    pub fn base_flows(&self) -> impl Iterator<Item = &Flow> {
        self.base_flows.values()
    }

    pub fn cell_load(&self, cell_id: &str, dir: Direction) -> CellLoad {
        self.sim.cell_load(cell_id, dir).unwrap_or(CellLoad {
            capacity_mbps: self
                .sim
                .topology()
                .cell(cell_id)
                .map_or(0.0, |c| c.capacity(dir)),
            allocated_mbps: 0.0,
            offered_mbps: 0.0,
        })
    }

    pub fn fingerprint(&self) -> StateFingerprint {
        StateFingerprint {
            policies: self.pcf.policies().cloned().collect(),
            policy_revision: self.pcf.revision(),
            instances: self.edge.instances().cloned().collect(),
            controls: self.ric.controls().to_vec(),
            xapps: self.ric.xapps().cloned().collect(),
            subscriptions: self.ric.subscriptions().count(),
        }
    }

    // policy control

    pub fn create_policy(&mut self, p: QosPolicy) -> Result<QosPolicy, WorldError> {
        Ok(self.pcf.create_policy(p, self.sim.topology())?)
    }

    pub fn update_policy(&mut self, policy_id: &str, p: QosPolicy) -> Result<QosPolicy, WorldError> {
        Ok(self.pcf.update_policy(policy_id, p, self.sim.topology())?)
    }

    pub fn get_policy(&self, policy_id: &str) -> Result<QosPolicy, WorldError> {
        Ok(self.pcf.get(policy_id)?.clone())
    }

    pub fn effective_rules(&self, ue_id: &str) -> Result<EffectiveRules, WorldError> {
        Ok(self.pcf.resolve_effective_rules(ue_id, self.sim.topology())?)
    }

    /// Endpoint a UE's service requests go to: the running instance on its
    /// steering destination, if any.
    pub fn resolve_service_endpoint(&self, ue_id: &str) -> Result<Option<Endpoint>, WorldError> {
        let rules = self.effective_rules(ue_id)?;
        Ok(rules.steering_dest_node_id.and_then(|node| {
            self.edge
                .instances()
                .find(|i| i.node_id == node && i.state == ServiceState::Running)
                .map(|i| i.endpoint.clone())
        }))
    }

    // edge

    pub fn deploy_service(&mut self, card: &ModelCard, node_id: &str, resources: Resources) -> Result<ServiceInstance, WorldError> {
        let now = self.now();
        Ok(self.edge.deploy_service(card, node_id, resources, now)?)
    }

    pub fn terminate_service(&mut self, instance_id: &str) -> Result<(), WorldError> {
        let now = self.now();
        Ok(self.edge.terminate_service(instance_id, now)?)
    }

    pub fn registry_and_edge(&self) -> (&ModelRegistry, &EdgeManager) {
        (&self.registry, &self.edge)
    }

    // ric

    pub fn send_control(&mut self, c: ControlRequest) -> Result<ControlAck, WorldError> {
        let now = self.now();
        let cell = self.sim.topology().cell(&c.cell_id).cloned();
        Ok(self.ric.send_control(c, cell.as_ref(), now)?)
    }

    pub fn subscribe(&mut self, s: crate::ric::Subscription) -> Result<String, WorldError> {
        let flows = self.flows();
        let now = self.now();
        Ok(self.ric.subscribe(s, &flows, now)?)
    }

    pub fn unsubscribe(&mut self, sub_id: &str) -> Result<(), WorldError> {
        Ok(self.ric.unsubscribe(sub_id)?)
    }

    /// Deploy a monitoring xApp; `session_id` tags the alerts it raises.
    pub fn deploy_xapp(&mut self, spec: XAppSpec, session_id: Option<&str>) -> Result<String, WorldError> {
        let flows = self.flows();
        let now = self.now();
        let id = self.ric.deploy_xapp(spec, &flows, now)?;
        if let Some(s) = session_id {
            self.xapp_sessions.insert(id.clone(), s.to_string());
        }
        Ok(id)
    }

    pub fn stop_xapp(&mut self, xapp_id: &str) -> Result<(), WorldError> {
        Ok(self.ric.stop_xapp(xapp_id)?)
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.ric.monitors().flat_map(|m| m.alerts().iter().cloned()).collect()
    }

    pub fn report(&self, xapp_id: &str, window_ms: SimTime) -> Result<QosReport, WorldError> {
        let m = self.ric.monitor(xapp_id)?;
        Ok(m.aggregate_report(window_ms, self.now())?)
    }

    // time

    fn sync_flows(&mut self) -> Result<(), WorldError> {
        let topo = self.sim.topology().clone();
        for base in self.base_flows.values() {
            let rules = self.pcf.resolve_effective_rules(&base.ue_id, &topo)?;
            let mut f = rules.apply_to(base);
            f.offered_mbps = base.offered_mbps;
            if self.sim.flow(&f.flow_id) != Some(&f) {
                self.sim.replace_flow(f)?;
            }
        }
        self.applied_revision = self.pcf.revision();
        Ok(())
    }

    fn step(&mut self) -> Result<(), WorldError> {
        let t = self.sim.now();
        let mut dirty = self.pcf.revision() != self.applied_revision;
        while let Some(l) = self.load_schedule.get(self.next_load).filter(|l| l.t_ms <= t) {
            let l = l.clone();
            if let Some(b) = self.base_flows.get_mut(&l.flow_id) {
                b.offered_mbps = l.offered_mbps;
            }
            self.next_load += 1;
            dirty = true;
        }
        for c in self.ric.take_due_controls(t) {
            self.sim
                .set_slice(&c.cell_id, &c.slice_id, c.new_scheduling_weight, c.new_dedicated_ratio)?;
        }
        if dirty {
            self.sync_flows()?;
        }
        self.edge.tick(t);
        let nodes: Vec<String> = self.edge.nodes().map(|n| n.node_id.clone()).collect();
        for n in nodes {
            let up = self.edge.node_serving(&n);
            self.sim.set_service_up(&n, up);
        }

        let samples = self.sim.tick();
        let now = self.sim.now();
        let flows = self.flows();
        for d in self.ric.on_tick(now, &samples, &flows) {
            if !d.hosted {
                self.external.push(d.indication);
                continue;
            }
            let xapp_id = d.indication.xapp_id.clone();
            for s in &d.indication.samples {
                self.events.push(
                    now,
                    EventKind::MetricSample {
                        xapp_id: xapp_id.clone(),
                        sample: s.clone(),
                    },
                );
            }
            for a in d.alerts {
                self.events.push(now, EventKind::Alert { alert: a });
            }
            let spec = self.ric.xapp(&xapp_id)?.spec.clone();
            if let (true, Some(inst)) = (spec.track_inference, spec.instance_id.as_deref()) {
                if let Ok(lat) = self.edge.serve_request(inst, PROBE_PAYLOAD_KB, now) {
                    self.ric.record_inference(&xapp_id, now, lat)?;
                }
            }
        }
        if now % self.report_period_ms == 0 {
            let running: Vec<String> = self
                .ric
                .xapps()
                .filter(|x| x.state == XAppState::Running)
                .map(|x| x.xapp_id.clone())
                .collect();
            for id in running {
                if let Ok(report) = self.ric.monitor(&id)?.aggregate_report(self.report_period_ms, now) {
                    self.events.push(now, EventKind::QosReport { report });
                }
            }
        }
        Ok(())
    }

    /// Advance by `ms` of simulated time (a positive multiple of the tick).
    pub fn advance(&mut self, ms: SimTime) -> Result<(), WorldError> {
        if ms == 0 || ms % TICK_MS != 0 {
            return Err(SimError::TickMisaligned(ms).into());
        }
        for _ in 0..ms / TICK_MS {
            self.step()?;
        }
        Ok(())
    }

    /// Session that owns `xapp_id`, when it was deployed by an agent.
    pub fn xapp_session(&self, xapp_id: &str) -> Option<&str> {
        self.xapp_sessions.get(xapp_id).map(String::as_str)
    }
}
