//! Tool implementations run by the orchestrator.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::orchestrator::Failure;
use super::planner::ToolCall;
use super::profile::ProfileUpdate;
use super::{placement_score, ActionKind, ActionPayload, DeploymentPlan, NetworkAction, NodeScore, SessionState, Stage};
use crate::edge::{NodeFilter, Resources};
use crate::monitor::XAppSpec;
use crate::pcf::QosPolicy;
use crate::registry::{self, ModelCard, Placement, RegistryError};
use crate::ric::ControlRequest;
use crate::sim::Direction;

use super::Orchestrator;

fn args<T: DeserializeOwned>(call: &ToolCall) -> Result<T, Failure> {
    serde_json::from_value(call.arguments.clone()).map_err(|e| Failure::Fatal(format!("bad arguments: {e}")))
}

fn fatal(e: impl std::fmt::Display) -> Failure {
    Failure::Fatal(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("tool results serialize")
}

#[derive(Deserialize)]
struct Search {
    task_tag: String,
    limit: usize,
}

#[derive(Deserialize)]
struct ModelId {
    model_id: String,
}

#[derive(Deserialize)]
struct ModelIds {
    model_ids: Vec<String>,
}

#[derive(Deserialize)]
struct Index {
    index: usize,
}

#[derive(Deserialize)]
struct Plan {
    model_id: String,
    #[serde(default)]
    node_id: Option<String>,
}

#[derive(Deserialize)]
struct Confirm {
    accept: bool,
    #[serde(default)]
    node_id: Option<String>,
    #[serde(default)]
    deploy_at_ms: Option<u64>,
}

#[derive(Deserialize)]
struct Deploy {
    model_id: String,
    node_id: String,
    resources: Resources,
}

#[derive(Deserialize)]
struct CellLoadArgs {
    cell_id: String,
    #[serde(default = "uplink")]
    direction: Direction,
}

fn uplink() -> Direction {
    Direction::Uplink
}

#[derive(Deserialize)]
struct ListUes {
    cell_ids: Vec<String>,
    #[serde(default)]
    device_type: Option<String>,
}

#[derive(Deserialize, Default)]
struct ListNodes {
    #[serde(default)]
    cell_ids: Vec<String>,
    #[serde(default)]
    max_latency_ms: Option<f64>,
}

#[derive(Deserialize)]
struct CreatePolicy {
    policy: QosPolicy,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct UpdatePolicy {
    policy_id: String,
    policy: QosPolicy,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct Steer {
    ue_ids: Vec<String>,
    dest_node_id: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct SliceControl {
    cell_id: String,
    slice_id: String,
    #[serde(default)]
    new_scheduling_weight: Option<f64>,
    #[serde(default)]
    new_dedicated_ratio: Option<f64>,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct DeployXApp {
    spec: XAppSpec,
}

fn card_summary(c: &ModelCard) -> Value {
    json!({
        "model_id": c.model_id,
        "task_tags": c.task_tags,
        "downloads": c.downloads,
        "likes": c.likes,
        "size_mb": c.size_mb,
        "gpu_required": c.gpu_required,
        "servable": c.servable,
        "servability_reasons": c.servability_reasons,
    })
}

impl Orchestrator {
    pub(super) fn exec(&mut self, s: &mut SessionState, call: &ToolCall) -> Result<Value, Failure> {
        match call.tool.as_str() {
            "update_profile" => {
                let u: ProfileUpdate = args(call)?;
                s.profile.merge(&u).map_err(Failure::Soft)?;
                Ok(to_json(&s.profile))
            }
            "search_models" => {
                let a: Search = args(call)?;
                let cards = self.world.registry().search_models(&a.task_tag, a.limit).map_err(fatal)?;
                s.work.searched = cards;
                s.work.readmes.clear();
                Ok(Value::Array(s.work.searched.iter().map(card_summary).collect()))
            }
            "fetch_readme" => {
                let a: ModelId = args(call)?;
                if !s.work.searched.iter().any(|c| c.model_id == a.model_id) {
                    return Err(Failure::Soft(format!("{} was not in the search results", a.model_id)));
                }
                match self.world.registry().fetch_readme(&a.model_id) {
                    Ok(text) => {
                        s.work.readmes.insert(a.model_id.clone(), Some(text.clone()));
                        Ok(json!({ "model_id": a.model_id, "readme": text }))
                    }
                    Err(RegistryError::NotFound(m)) => {
                        s.work.readmes.insert(a.model_id.clone(), None);
                        Err(Failure::Soft(format!("no README for {m}")))
                    }
                    Err(e) => Err(fatal(e)),
                }
            }
            "assess_servability" => {
                let a: ModelIds = args(call)?;
                let registry = self.world.registry();
                let mut out = Vec::new();
                for id in &a.model_ids {
                    let readme = s.work.readmes.get(id).cloned().flatten().unwrap_or_default();
                    let card = s
                        .work
                        .searched
                        .iter_mut()
                        .find(|c| &c.model_id == id)
                        .ok_or_else(|| fatal(format!("{id} was not in the search results")))?;
                    registry.assess(card, &readme);
                    out.push(json!({
                        "model_id": id,
                        "servable": card.servable,
                        "servability_reasons": card.servability_reasons,
                    }));
                }
                Ok(Value::Array(out))
            }
            "filter_and_rank" => {
                let a: ModelIds = args(call)?;
                let cards: Vec<ModelCard> = s
                    .work
                    .searched
                    .iter()
                    .filter(|c| a.model_ids.contains(&c.model_id))
                    .cloned()
                    .collect();
                let placement = Placement {
                    cell_ids: s.profile.coverage_cell_ids.clone(),
                    max_latency_ms: s.profile.max_latency_ms,
                };
                let nodes: Vec<_> = self.world.edge().nodes().cloned().collect();
                match registry::filter_and_rank(&cards, &placement, &nodes) {
                    Ok(kept) => {
                        let summary = Value::Array(kept.iter().map(card_summary).collect());
                        s.candidates = kept;
                        self.set_stage(s, Stage::AwaitModelChoice);
                        let mut text = format!(
                            "Found {} deployable models out of {} searched:",
                            s.candidates.len(),
                            cards.len()
                        );
                        for (i, c) in s.candidates.iter().enumerate() {
                            text.push_str(&format!("\n{i}. {} ({} downloads, {} MB)", c.model_id, c.downloads, c.size_mb));
                        }
                        text.push_str("\nWhich one should I deploy? Reply with its number.");
                        self.say(s, text);
                        Ok(summary)
                    }
                    Err(RegistryError::NoCandidates) => Err(Failure::NoCandidates(RegistryError::NoCandidates.to_string())),
                    Err(e) => Err(fatal(e)),
                }
            }
            "list_edge_nodes" => {
                let a: ListNodes = args(call)?;
                let filter = NodeFilter {
                    resources: Resources::default(),
                    max_latency_ms: a.max_latency_ms,
                    cell_ids: a.cell_ids,
                };
                Ok(to_json(&self.world.edge().list_nodes(&filter)))
            }
            "select_model" => {
                let a: Index = args(call)?;
                let card = s.candidates.get(a.index).cloned().ok_or_else(|| {
                    Failure::Soft(format!("index {} is out of range for {} candidates", a.index, s.candidates.len()))
                })?;
                s.chosen_model = Some(card.clone());
                s.plan = None;
                self.set_stage(s, Stage::AwaitDeployConfirm);
                Ok(json!({ "index": a.index, "model_id": card.model_id }))
            }
            "plan_deployment" => {
                let a: Plan = args(call)?;
                let soft = s.stage == Stage::AwaitDeployConfirm && s.plan.is_some();
                let plan = self.plan_for(s, &a.model_id, a.node_id.as_deref()).map_err(|e| {
                    if soft {
                        Failure::Soft(e)
                    } else {
                        Failure::Fatal(e)
                    }
                })?;
                let deploy_at = s.plan.as_ref().map_or(plan.deploy_at_ms, |p| p.deploy_at_ms.max(plan.deploy_at_ms));
                let plan = DeploymentPlan {
                    deploy_at_ms: deploy_at,
                    ..plan
                };
                s.plan = Some(plan.clone());
                if s.stage == Stage::AwaitDeployConfirm {
                    let text = format!(
                        "Plan: deploy {} on {} with {} CPU, {} MB memory and {} GPU (score {:.4}). Shall I go ahead?",
                        plan.model_id, plan.node_id, plan.resources.cpu, plan.resources.mem_mb, plan.resources.gpu, plan.score
                    );
                    self.say(s, text);
                }
                Ok(to_json(&plan))
            }
            "confirm_deployment" => {
                let a: Confirm = args(call)?;
                let current = s.plan.clone().ok_or_else(|| Failure::Soft("there is no plan to confirm".into()))?;
                let mut plan = current.clone();
                if let Some(n) = a.node_id.as_deref().filter(|n| *n != current.node_id) {
                    plan = self.plan_for(s, &current.model_id, Some(n)).map_err(Failure::Soft)?;
                    plan.deploy_at_ms = current.deploy_at_ms;
                }
                if let Some(t) = a.deploy_at_ms {
                    plan.deploy_at_ms = t.max(self.world.now());
                }
                s.plan = Some(plan.clone());
                if a.accept {
                    self.set_stage(s, Stage::Deploy);
                } else if a.node_id.is_some() {
                    let text = format!(
                        "Revised plan: deploy {} on {} (score {:.4}). Shall I go ahead?",
                        plan.model_id, plan.node_id, plan.score
                    );
                    self.say(s, text);
                } else {
                    self.say(s, "Which edge node should I use instead?".to_string());
                }
                Ok(json!({ "accepted": a.accept, "plan": plan }))
            }
            "deploy_service" => {
                let a: Deploy = args(call)?;
                let card = s
                    .chosen_model
                    .clone()
                    .filter(|c| c.model_id == a.model_id)
                    .ok_or_else(|| fatal(format!("{} is not the chosen model", a.model_id)))?;
                let inst = self.world.deploy_service(&card, &a.node_id, a.resources).map_err(fatal)?;
                s.service_instance_id = Some(inst.instance_id.clone());
                s.service_node_id = Some(inst.node_id.clone());
                self.set_stage(s, Stage::Adapt);
                Ok(to_json(&inst))
            }
            "get_cell_load" => {
                let a: CellLoadArgs = args(call)?;
                if self.world.sim().topology().cell(&a.cell_id).is_none() {
                    return Err(fatal(format!("unknown cell {}", a.cell_id)));
                }
                let l = self.world.cell_load(&a.cell_id, a.direction);
                Ok(json!({
                    "cell_id": a.cell_id,
                    "direction": a.direction,
                    "capacity_mbps": l.capacity_mbps,
                    "allocated_mbps": l.allocated_mbps,
                    "offered_mbps": l.offered_mbps,
                    "utilization": l.utilization(),
                }))
            }
            "list_ues" => {
                let a: ListUes = args(call)?;
                let mut ues: Vec<_> = self
                    .world
                    .sim()
                    .topology()
                    .ues
                    .iter()
                    .filter(|u| a.cell_ids.contains(&u.cell_id))
                    .filter(|u| a.device_type.as_ref().is_none_or(|t| &u.device_type == t))
                    .cloned()
                    .collect();
                ues.sort_by(|x, y| x.ue_id.cmp(&y.ue_id));
                Ok(to_json(&ues))
            }
            "list_service_models" => Ok(json!(self.world.ric().service_models())),
            "create_qos_policy" => {
                let a: CreatePolicy = args(call)?;
                let p = self.world.create_policy(a.policy).map_err(fatal)?;
                s.qos_policy_id = Some(p.policy_id.clone());
                s.target_ue_ids = p.target_ue_ids.clone();
                Ok(self.record_action(s, ActionKind::CreateQosPolicy, ActionPayload::Policy(p), a.rationale))
            }
            "update_qos_policy" => {
                let a: UpdatePolicy = args(call)?;
                let p = self.world.update_policy(&a.policy_id, a.policy).map_err(fatal)?;
                if s.qos_policy_id.as_deref() == Some(p.policy_id.as_str()) {
                    s.target_ue_ids = p.target_ue_ids.clone();
                }
                Ok(self.record_action(s, ActionKind::UpdateQosPolicy, ActionPayload::Policy(p), a.rationale))
            }
            "steer_traffic" => {
                let a: Steer = args(call)?;
                if self.world.edge().node(&a.dest_node_id).is_none() {
                    return Err(fatal(format!("unknown edge node {}", a.dest_node_id)));
                }
                let mut p = QosPolicy::for_ues(a.ue_ids);
                p.steering_dest_node_id = Some(a.dest_node_id);
                let p = match s.steering_policy_id.clone() {
                    Some(id) => self.world.update_policy(&id, p),
                    None => self.world.create_policy(p),
                }
                .map_err(fatal)?;
                s.steering_policy_id = Some(p.policy_id.clone());
                if s.target_ue_ids.is_empty() {
                    s.target_ue_ids = p.target_ue_ids.clone();
                }
                Ok(self.record_action(s, ActionKind::SteerTraffic, ActionPayload::Policy(p), a.rationale))
            }
            "ran_slice_control" => {
                let a: SliceControl = args(call)?;
                let req = ControlRequest {
                    request_id: String::new(),
                    cell_id: a.cell_id,
                    slice_id: a.slice_id,
                    new_scheduling_weight: a.new_scheduling_weight,
                    new_dedicated_ratio: a.new_dedicated_ratio,
                };
                let ack = self.world.send_control(req.clone()).map_err(fatal)?;
                let req = ControlRequest {
                    request_id: ack.request_id.clone(),
                    ..req
                };
                s.control_acks.push(ack.clone());
                let mut v = self.record_action(s, ActionKind::RanSliceControl, ActionPayload::Control(req), a.rationale);
                v["ack"] = to_json(&ack);
                Ok(v)
            }
            "generate_xapp_spec" => {
                let spec: XAppSpec = args(call)?;
                spec.validate().map_err(fatal)?;
                Ok(to_json(&spec))
            }
            "deploy_xapp" => {
                let a: DeployXApp = args(call)?;
                let id = self
                    .world
                    .deploy_xapp(a.spec, Some(&s.session_id))
                    .map_err(fatal)?;
                s.xapp_ids.push(id.clone());
                self.set_stage(s, Stage::Complete);
                self.say(s, format!("Monitoring is live through xApp {id}. Provisioning is complete."));
                Ok(json!({ "xapp_id": id }))
            }
            other => Err(fatal(format!("no implementation for tool {other}"))),
        }
    }

    fn record_action(&mut self, s: &mut SessionState, kind: ActionKind, payload: ActionPayload, rationale: String) -> Value {
        let a = NetworkAction {
            kind,
            payload,
            rationale,
        };
        let v = to_json(&a);
        s.applied_actions.push(a);
        v
    }

    /// Best feasible node for the chosen model, or the forced node if it is
    /// feasible.
    pub(super) fn plan_for(&self, s: &SessionState, model_id: &str, forced: Option<&str>) -> Result<DeploymentPlan, String> {
        let card = s
            .chosen_model
            .as_ref()
            .filter(|c| c.model_id == model_id)
            .ok_or_else(|| format!("{model_id} is not the chosen model"))?;
        let max_latency = s
            .profile
            .max_latency_ms
            .ok_or_else(|| "the profile has no latency bound".to_string())?;
        let need = card.required_resources();
        let cells = &s.profile.coverage_cell_ids;
        let mut scores: Vec<NodeScore> = self
            .world
            .edge()
            .nodes()
            .filter(|n| n.fits(&need))
            .filter_map(|n| {
                let lat = n.latency_to(cells)?;
                (lat <= max_latency).then(|| NodeScore {
                    node_id: n.node_id.clone(),
                    latency_ms: lat,
                    free_cpu_fraction: n.free_cpu_fraction(),
                    score: placement_score(lat, max_latency, n.free_cpu_fraction()),
                })
            })
            .collect();
        scores.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.node_id.cmp(&b.node_id)));
        let pick = match forced {
            Some(n) => scores
                .iter()
                .find(|x| x.node_id == n)
                .ok_or_else(|| format!("NoFeasibleNode: {n} cannot host {model_id} within {max_latency} ms"))?,
            None => scores
                .first()
                .ok_or_else(|| format!("NoFeasibleNode: no edge node can host {model_id} within {max_latency} ms"))?,
        };
        Ok(DeploymentPlan {
            model_id: model_id.to_string(),
            node_id: pick.node_id.clone(),
            resources: need,
            deploy_at_ms: self.world.now(),
            score: pick.score,
            scores: scores.clone(),
        })
    }
}
