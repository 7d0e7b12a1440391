//! Edge infrastructure manager.
//!
//! Keeps the node registry and resource accounting, runs the (simulated)
//! lifecycle of AI service instances, and answers inference requests with a
//! load-dependent delay that the monitoring xApps pick up.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::registry::ModelCard;
use crate::scenario::{EdgeSettings, InferenceLoad};
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    CellSite,
    Regional,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Resources {
    #[serde(default)]
    pub cpu: u32,
    #[serde(default)]
    pub mem_mb: u64,
    #[serde(default)]
    pub gpu: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeNode {
    pub node_id: String,
    pub tier: Tier,
    pub cpu_cores: u32,
    pub mem_mb: u64,
    #[serde(default)]
    pub gpu_units: u32,
    #[serde(default)]
    pub allocated_cpu: u32,
    #[serde(default)]
    pub allocated_mem_mb: u64,
    #[serde(default)]
    pub allocated_gpu: u32,
    /// Attachment latency per cell id.
    #[serde(default)]
    pub attach_latency_ms: BTreeMap<String, f64>,
}

impl EdgeNode {
    pub fn free(&self) -> Resources {
        Resources {
            cpu: self.cpu_cores.saturating_sub(self.allocated_cpu),
            mem_mb: self.mem_mb.saturating_sub(self.allocated_mem_mb),
            gpu: self.gpu_units.saturating_sub(self.allocated_gpu),
        }
    }

    pub fn fits(&self, r: &Resources) -> bool {
        let free = self.free();
        free.cpu >= r.cpu && free.mem_mb >= r.mem_mb && free.gpu >= r.gpu
    }

    pub fn free_cpu_fraction(&self) -> f64 {
        if self.cpu_cores == 0 {
            0.0
        } else {
            f64::from(self.free().cpu) / f64::from(self.cpu_cores)
        }
    }

    /// Worst attachment latency over `cells`; `None` when any is unreachable.
    /// With no cells given, the best latency over all attached cells.
    pub fn latency_to(&self, cells: &[String]) -> Option<f64> {
        if cells.is_empty() {
            return self.attach_latency_ms.values().copied().reduce(f64::min);
        }
        let mut worst = 0.0f64;
        for c in cells {
            worst = worst.max(*self.attach_latency_ms.get(c)?);
        }
        Some(worst)
    }

    fn validate(&self) -> Result<(), EdgeError> {
        if self.node_id.is_empty() {
            return Err(EdgeError::Invalid("node_id must not be empty".into()));
        }
        if self.allocated_cpu > self.cpu_cores || self.allocated_mem_mb > self.mem_mb || self.allocated_gpu > self.gpu_units {
            return Err(EdgeError::Invalid(format!("node {}: allocated exceeds capacity", self.node_id)));
        }
        if let Some((c, l)) = self.attach_latency_ms.iter().find(|(_, l)| !(**l > 0.0)) {
            return Err(EdgeError::Invalid(format!("node {}: attach latency to {c} is {l}", self.node_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeFilter {
    #[serde(default)]
    pub resources: Resources,
    /// Upper bound on attachment latency to the cells below.
    #[serde(default)]
    pub max_latency_ms: Option<f64>,
    #[serde(default)]
    pub cell_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceState {
    Pending,
    Deploying,
    Running,
    Failed,
    Terminated,
}

impl ServiceState {
    pub fn is_legal_transition(from: ServiceState, to: ServiceState) -> bool {
        use ServiceState::*;
        matches!(
            (from, to),
            (Pending, Deploying) | (Deploying, Running) | (Running, Terminated) | (Deploying, Failed) | (Running, Failed) | (Failed, Terminated)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Http,
    GrpcLike,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
    pub protocol: Protocol,
}

/// What the agent "generates" to serve a model: enough to start a REST
/// server for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub instance_id: String,
    pub model_id: String,
    pub node_id: String,
    pub runtime: String,
    pub protocol: Protocol,
    pub host: String,
    pub port: u16,
    pub health_path: String,
    pub infer_path: String,
    pub resources: Resources,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceInstance {
    pub instance_id: String,
    pub model_id: String,
    pub node_id: String,
    pub resources: Resources,
    pub endpoint: Endpoint,
    pub state: ServiceState,
    pub base_inference_ms: f64,
    pub created_at_ms: SimTime,
    pub descriptor: ServiceDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor_path: Option<PathBuf>,
    /// `(t_ms, state)` for every state entered.
    pub history: Vec<(SimTime, ServiceState)>,
    #[serde(skip)]
    ticks_in_state: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub t_ms: SimTime,
    pub instance_id: String,
    pub payload_kb: f64,
    pub concurrent_requests: u32,
    pub latency_ms: f64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("node {0} already registered")]
    Duplicate(String),
    #[error("invalid node: {0}")]
    Invalid(String),
    #[error("node {node_id} lacks capacity for {requested:?} (free {free:?})")]
    InsufficientCapacity {
        node_id: String,
        requested: Resources,
        free: Resources,
    },
    #[error("model {0} is not servable")]
    NotServable(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("service instance {0} not found")]
    NotFound(String),
    #[error("service instance {0} is not running")]
    Unavailable(String),
    #[error("no free port on node {0}")]
    NoPorts(String),
    #[error("illegal transition for {instance_id}: {from:?} -> {to:?}")]
    IllegalTransition {
        instance_id: String,
        from: ServiceState,
        to: ServiceState,
    },
    #[error("writing descriptor: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct EdgeManager {
    nodes: BTreeMap<String, EdgeNode>,
    instances: BTreeMap<String, ServiceInstance>,
    settings: EdgeSettings,
    inference_load: Vec<InferenceLoad>,
    inference_log: Vec<InferenceRecord>,
    next_instance: u64,
}

impl EdgeManager {
    pub fn new(settings: EdgeSettings) -> Self {
        Self {
            nodes: BTreeMap::new(),
            instances: BTreeMap::new(),
            settings,
            inference_load: Vec::new(),
            inference_log: Vec::new(),
            next_instance: 0,
        }
    }

    pub fn settings(&self) -> &EdgeSettings {
        &self.settings
    }

    pub fn set_descriptor_dir(&mut self, dir: Option<PathBuf>) {
        self.settings.descriptor_dir = dir;
    }

    pub fn set_inference_load(&mut self, mut schedule: Vec<InferenceLoad>) {
        schedule.sort_by_key(|l| l.t_ms);
        self.inference_load = schedule;
    }

    pub fn register_node(&mut self, node: EdgeNode) -> Result<(), EdgeError> {
        if self.nodes.contains_key(&node.node_id) {
            return Err(EdgeError::Duplicate(node.node_id));
        }
        node.validate()?;
        self.nodes.insert(node.node_id.clone(), node);
        Ok(())
    }

    pub fn node(&self, node_id: &str) -> Option<&EdgeNode> {
        self.nodes.get(node_id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EdgeNode> {
        self.nodes.values()
    }

    /// Nodes with enough free resources and attachment latency within the
    /// bound, sorted by node id.
    pub fn list_nodes(&self, filter: &NodeFilter) -> Vec<EdgeNode> {
        self.nodes
            .values()
            .filter(|n| n.fits(&filter.resources))
            .filter(|n| match filter.max_latency_ms {
                Some(bound) => n.latency_to(&filter.cell_ids).is_some_and(|l| l <= bound),
                None => filter.cell_ids.is_empty() || n.latency_to(&filter.cell_ids).is_some(),
            })
            .cloned()
            .collect()
    }

    pub fn instance(&self, instance_id: &str) -> Result<&ServiceInstance, EdgeError> {
        self.instances
            .get(instance_id)
            .ok_or_else(|| EdgeError::NotFound(instance_id.to_string()))
    }

    pub fn instances(&self) -> impl Iterator<Item = &ServiceInstance> {
        self.instances.values()
    }

    /// Whether `node_id` currently hosts a running instance.
    pub fn node_serving(&self, node_id: &str) -> bool {
        self.instances
            .values()
            .any(|i| i.node_id == node_id && i.state == ServiceState::Running)
    }

    fn free_port(&self, node_id: &str) -> Option<u16> {
        let used: BTreeSet<u16> = self
            .instances
            .values()
            .filter(|i| i.node_id == node_id && i.state != ServiceState::Terminated)
            .map(|i| i.endpoint.port)
            .collect();
        let base = self.settings.port_base;
        (0..self.settings.port_count)
            .filter_map(|k| base.checked_add(k))
            .find(|p| !used.contains(p))
    }

    pub fn deploy_service(&mut self, model: &ModelCard, node_id: &str, resources: Resources, now: SimTime) -> Result<ServiceInstance, EdgeError> {
        if !model.servable {
            return Err(EdgeError::NotServable(model.model_id.clone()));
        }
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| EdgeError::UnknownNode(node_id.to_string()))?;
        if !node.fits(&resources) {
            return Err(EdgeError::InsufficientCapacity {
                node_id: node_id.to_string(),
                requested: resources,
                free: node.free(),
            });
        }
        let port = self.free_port(node_id).ok_or_else(|| EdgeError::NoPorts(node_id.to_string()))?;

        let instance_id = format!("svc-{}", self.next_instance + 1);
        let protocol = Protocol::Http;
        let descriptor = ServiceDescriptor {
            instance_id: instance_id.clone(),
            model_id: model.model_id.clone(),
            node_id: node_id.to_string(),
            runtime: "rest".into(),
            protocol,
            host: node_id.to_string(),
            port,
            health_path: "/health".into(),
            infer_path: "/v1/infer".into(),
            resources,
        };
        let descriptor_path = match &self.settings.descriptor_dir {
            Some(dir) => {
                let path = dir.join(format!("{instance_id}.json"));
                let body = serde_json::to_string_pretty(&descriptor).map_err(|e| EdgeError::Io(e.to_string()))?;
                std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(&path, body))
                    .map_err(|e| EdgeError::Io(format!("{}: {e}", path.display())))?;
                Some(path)
            }
            None => None,
        };

        self.next_instance += 1;
        let node = self.nodes.get_mut(node_id).expect("node checked above");
        node.allocated_cpu += resources.cpu;
        node.allocated_mem_mb += resources.mem_mb;
        node.allocated_gpu += resources.gpu;

        let inst = ServiceInstance {
            instance_id: instance_id.clone(),
            model_id: model.model_id.clone(),
            node_id: node_id.to_string(),
            resources,
            endpoint: Endpoint {
                host: node_id.to_string(),
                port,
                protocol,
            },
            state: ServiceState::Pending,
            base_inference_ms: model.base_inference_ms.unwrap_or(self.settings.default_inference_ms),
            created_at_ms: now,
            descriptor,
            descriptor_path,
            history: vec![(now, ServiceState::Pending)],
            ticks_in_state: 0,
        };
        self.instances.insert(instance_id, inst.clone());
        Ok(inst)
    }

    fn transition(&mut self, instance_id: &str, to: ServiceState, now: SimTime) -> Result<(), EdgeError> {
        let inst = self
            .instances
            .get_mut(instance_id)
            .ok_or_else(|| EdgeError::NotFound(instance_id.to_string()))?;
        if !ServiceState::is_legal_transition(inst.state, to) {
            return Err(EdgeError::IllegalTransition {
                instance_id: instance_id.to_string(),
                from: inst.state,
                to,
            });
        }
        inst.state = to;
        inst.ticks_in_state = 0;
        inst.history.push((now, to));
        Ok(())
    }

    /// Advance instance lifecycles by one tick ending at `now`.
    pub fn tick(&mut self, now: SimTime) {
        let deploy_ticks = self.settings.deploy_ticks.max(2);
        let ids: Vec<String> = self.instances.keys().cloned().collect();
        for id in ids {
            let inst = self.instances.get_mut(&id).expect("id from keys");
            inst.ticks_in_state += 1;
            let next = match inst.state {
                ServiceState::Pending => Some(ServiceState::Deploying),
                // deploying lasts deploy_ticks - 1 ticks after leaving pending
                ServiceState::Deploying if inst.ticks_in_state + 1 >= deploy_ticks => Some(ServiceState::Running),
                _ => None,
            };
            if let Some(to) = next {
                self.transition(&id, to, now).expect("lifecycle step is legal");
            }
        }
    }

    pub fn fail_service(&mut self, instance_id: &str, now: SimTime) -> Result<(), EdgeError> {
        self.transition(instance_id, ServiceState::Failed, now)
    }

    pub fn terminate_service(&mut self, instance_id: &str, now: SimTime) -> Result<(), EdgeError> {
        match self.instances.get(instance_id) {
            None => return Err(EdgeError::NotFound(instance_id.to_string())),
            Some(i) if i.state == ServiceState::Terminated => return Err(EdgeError::NotFound(instance_id.to_string())),
            Some(_) => {}
        }
        self.transition(instance_id, ServiceState::Terminated, now)?;
        let inst = &self.instances[instance_id];
        let (node_id, r) = (inst.node_id.clone(), inst.resources);
        if let Some(node) = self.nodes.get_mut(&node_id) {
            node.allocated_cpu -= r.cpu;
            node.allocated_mem_mb -= r.mem_mb;
            node.allocated_gpu -= r.gpu;
        }
        Ok(())
    }

    pub fn concurrent_requests_at(&self, now: SimTime) -> u32 {
        self.inference_load
            .iter()
            .take_while(|l| l.t_ms <= now)
            .last()
            .map_or(0, |l| l.concurrent_requests)
    }

    pub fn inference_latency(base_ms: f64, load_factor: f64, concurrent: u32) -> f64 {
        base_ms * (1.0 + load_factor * f64::from(concurrent))
    }

    /// Serve one request using the scheduled concurrency at `now`.
    pub fn serve_request(&mut self, instance_id: &str, payload_kb: f64, now: SimTime) -> Result<f64, EdgeError> {
        let concurrent = self.concurrent_requests_at(now);
        self.serve_request_with(instance_id, payload_kb, concurrent, now)
    }

    pub fn serve_request_with(&mut self, instance_id: &str, payload_kb: f64, concurrent: u32, now: SimTime) -> Result<f64, EdgeError> {
        let inst = self.instance(instance_id)?;
        if inst.state != ServiceState::Running {
            return Err(EdgeError::Unavailable(instance_id.to_string()));
        }
        let latency = Self::inference_latency(inst.base_inference_ms, self.settings.load_factor, concurrent);
        self.inference_log.push(InferenceRecord {
            t_ms: now,
            instance_id: instance_id.to_string(),
            payload_kb,
            concurrent_requests: concurrent,
            latency_ms: latency,
        });
        Ok(latency)
    }

    pub fn inference_log(&self) -> &[InferenceRecord] {
        &self.inference_log
    }
}
