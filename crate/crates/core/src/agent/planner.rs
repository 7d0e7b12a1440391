//! Planner backends.
//!
//! A planner sees a [`PlannerContext`] and answers with tool calls and/or a
//! text reply. It never touches the deployment itself; the orchestrator
//! checks every call against the catalog and runs it.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::catalog::AdaptationRules;
use super::profile::{ExtractionRules, UseCaseProfile};
use super::{DeploymentPlan, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    #[serde(default)]
    pub arguments: Value,
}

impl ToolCall {
    pub fn new(tool: &str, arguments: Value) -> Self {
        Self {
            tool: tool.to_string(),
            arguments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutcome {
    pub call_id: String,
    pub tool: String,
    pub ok: bool,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerContext {
    pub session_id: String,
    pub stage: Stage,
    /// Planner calls already made in this stage.
    pub stage_step: u32,
    pub profile: UseCaseProfile,
    pub user_message: Option<String>,
    pub searched_model_ids: Vec<String>,
    pub candidate_ids: Vec<String>,
    pub chosen_model_id: Option<String>,
    pub plan: Option<DeploymentPlan>,
    pub service_instance_id: Option<String>,
    pub service_node_id: Option<String>,
    pub qos_policy_id: Option<String>,
    pub steering_policy_id: Option<String>,
    /// UEs the session's policies target.
    pub target_ue_ids: Vec<String>,
    pub node_ids: Vec<String>,
    /// Results of the calls from the previous step in this stage.
    pub last_results: Vec<ToolOutcome>,
    /// Tools permitted in this stage.
    pub tools: Vec<String>,
}

impl PlannerContext {
    fn last(&self, tool: &str) -> Vec<&ToolOutcome> {
        self.last_results.iter().filter(|r| r.tool == tool).collect()
    }

    fn ran(&self, tool: &str) -> bool {
        self.last_results.iter().any(|r| r.tool == tool)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlannerDecision {
    pub tool_calls: Vec<ToolCall>,
    pub text: Option<String>,
    /// Malformed replies discarded before this one.
    pub retries: u32,
}

impl PlannerDecision {
    fn calls(tool_calls: Vec<ToolCall>) -> Self {
        Self {
            tool_calls,
            ..Default::default()
        }
    }

    fn say(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("remote planner unreachable: {0}")]
    RemoteUnreachable(String),
    #[error("malformed planner reply after {attempts} attempts: {detail}")]
    MalformedReply { attempts: u32, detail: String },
}

pub trait Planner: Send + Sync {
    fn name(&self) -> &'static str;
    fn decide(&self, ctx: &PlannerContext) -> Result<PlannerDecision, PlannerError>;
}

/// Rule-driven planner: a pure function of the context.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPlanner;

const ACCEPT_WORDS: &[&str] = &["yes", "ok", "okay", "confirm", "accept", "go ahead", "deploy", "sure"];
const REJECT_WORDS: &[&str] = &["no", "reject", "not", "don't", "instead", "cancel"];

fn has_word(text: &str, words: &[&str]) -> bool {
    let t = text.to_lowercase();
    let tokens: Vec<&str> = t
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .filter(|s| !s.is_empty())
        .collect();
    words.iter().any(|w| {
        if w.contains(' ') {
            t.contains(w)
        } else {
            tokens.contains(w)
        }
    })
}

impl ScriptedPlanner {
    fn intent(&self, ctx: &PlannerContext) -> PlannerDecision {
        let rules = ExtractionRules::builtin();
        let Some(msg) = ctx.user_message.as_deref() else {
            return PlannerDecision::default();
        };
        let upd = rules.extract(msg);
        let mut merged = ctx.profile.clone();
        let _ = merged.merge(&upd);
        let text = match merged.missing().first() {
            Some(f) => rules.question(f),
            None => "Thanks, that covers the requirements. Looking for suitable models now.".to_string(),
        };
        let mut d = PlannerDecision::say(text);
        if !upd.is_empty() {
            d.tool_calls
                .push(ToolCall::new("update_profile", serde_json::to_value(&upd).expect("update serializes")));
        }
        d
    }

    fn model_match(&self, ctx: &PlannerContext) -> PlannerDecision {
        let ids = json!(ctx.searched_model_ids);
        if ctx.ran("assess_servability") {
            PlannerDecision::calls(vec![ToolCall::new("filter_and_rank", json!({ "model_ids": ids }))])
        } else if ctx.ran("fetch_readme") {
            PlannerDecision::calls(vec![ToolCall::new("assess_servability", json!({ "model_ids": ids }))])
        } else if ctx.ran("search_models") {
            PlannerDecision::calls(
                ctx.searched_model_ids
                    .iter()
                    .map(|id| ToolCall::new("fetch_readme", json!({ "model_id": id })))
                    .collect(),
            )
        } else {
            let tag = ctx.profile.application_category.clone().unwrap_or_default();
            PlannerDecision::calls(vec![ToolCall::new(
                "search_models",
                json!({ "task_tag": tag, "limit": AdaptationRules::builtin().search_limit }),
            )])
        }
    }

    fn model_choice(&self, ctx: &PlannerContext) -> PlannerDecision {
        let index = ctx.user_message.as_deref().and_then(|m| {
            m.split(|c: char| !c.is_ascii_digit())
                .find(|s| !s.is_empty())
                .and_then(|s| s.parse::<u64>().ok())
        });
        match index {
            Some(i) => PlannerDecision::calls(vec![ToolCall::new("select_model", json!({ "index": i }))]),
            None => PlannerDecision::say(format!(
                "Reply with the number (0 to {}) of the model to deploy.",
                ctx.candidate_ids.len().saturating_sub(1)
            )),
        }
    }

    fn deploy_confirm(&self, ctx: &PlannerContext) -> PlannerDecision {
        let Some(msg) = ctx.user_message.as_deref() else {
            return match (&ctx.plan, &ctx.chosen_model_id) {
                (None, Some(m)) => PlannerDecision::calls(vec![ToolCall::new("plan_deployment", json!({ "model_id": m }))]),
                _ => PlannerDecision::default(),
            };
        };
        let lower = msg.to_lowercase();
        let node = ctx.node_ids.iter().find(|n| lower.contains(&n.to_lowercase()));
        let mut args = serde_json::Map::new();
        if let Some(n) = node {
            args.insert("node_id".into(), json!(n));
        }
        if has_word(msg, REJECT_WORDS) {
            args.insert("accept".into(), json!(false));
        } else if has_word(msg, ACCEPT_WORDS) {
            args.insert("accept".into(), json!(true));
        } else {
            return PlannerDecision::say("Shall I deploy as planned? Answer yes, or name another node.");
        }
        PlannerDecision::calls(vec![ToolCall::new("confirm_deployment", Value::Object(args))])
    }

    fn deploy(&self, ctx: &PlannerContext) -> PlannerDecision {
        let (Some(plan), Some(model)) = (&ctx.plan, &ctx.chosen_model_id) else {
            return PlannerDecision::default();
        };
        if ctx.last("plan_deployment").iter().any(|r| r.ok) {
            PlannerDecision::calls(vec![ToolCall::new(
                "deploy_service",
                json!({ "model_id": model, "node_id": plan.node_id, "resources": plan.resources }),
            )])
        } else {
            PlannerDecision::calls(vec![ToolCall::new(
                "plan_deployment",
                json!({ "model_id": model, "node_id": plan.node_id }),
            )])
        }
    }

    fn adapt(&self, ctx: &PlannerContext) -> PlannerDecision {
        let rules = AdaptationRules::builtin();
        let p = &ctx.profile;
        if ctx.last_results.iter().any(|r| super::is_network_action(&r.tool)) {
            return PlannerDecision::say("Network adaptation applied.");
        }
        if !ctx.ran("get_cell_load") {
            let mut calls: Vec<ToolCall> = p
                .coverage_cell_ids
                .iter()
                .map(|c| ToolCall::new("get_cell_load", json!({ "cell_id": c, "direction": "uplink" })))
                .collect();
            let mut args = json!({ "cell_ids": p.coverage_cell_ids });
            if let Some(t) = &p.device_type {
                args["device_type"] = json!(t);
            }
            calls.push(ToolCall::new("list_ues", args));
            return PlannerDecision::calls(calls);
        }
        let count = p.device_count.unwrap_or(0) as usize;
        let ues: Vec<String> = ctx
            .last("list_ues")
            .first()
            .and_then(|r| r.result.as_array())
            .map(|a| {
                a.iter()
                    .filter_map(|u| u.get("ue_id").and_then(Value::as_str).map(String::from))
                    .take(count)
                    .collect()
            })
            .unwrap_or_default();
        let latency = p.max_latency_ms.unwrap_or(f64::INFINITY);
        let gbr_ul = count as f64 * p.min_ul_mbps.unwrap_or(0.0);
        let mut policy = json!({
            "target_ue_ids": ues,
            "slice_id": rules.slice_id,
            "gbr_ul_mbps": gbr_ul,
            "mbr_ul_mbps": gbr_ul * rules.mbr_over_gbr,
            "priority_level": rules.priority_for(latency),
        });
        if let Some(dl) = p.min_dl_mbps {
            let gbr_dl = count as f64 * dl;
            policy["gbr_dl_mbps"] = json!(gbr_dl);
            policy["mbr_dl_mbps"] = json!(gbr_dl * rules.mbr_over_gbr);
        }
        let why = format!(
            "{count} devices need {} Mbps uplink each within {latency} ms",
            p.min_ul_mbps.unwrap_or(0.0)
        );
        let mut calls = vec![match &ctx.qos_policy_id {
            Some(id) => ToolCall::new("update_qos_policy", json!({ "policy_id": id, "policy": policy, "rationale": why })),
            None => ToolCall::new("create_qos_policy", json!({ "policy": policy, "rationale": why })),
        }];
        if let (true, Some(node)) = (rules.steer_to_service_node, &ctx.service_node_id) {
            calls.push(ToolCall::new(
                "steer_traffic",
                json!({
                    "ue_ids": ues,
                    "dest_node_id": node,
                    "rationale": format!("serve inference at {node}"),
                }),
            ));
        }
        for r in ctx.last("get_cell_load") {
            let util = r.result.get("utilization").and_then(Value::as_f64).unwrap_or(0.0);
            if util > rules.ran_control.utilization_above {
                let cell = r.result.get("cell_id").and_then(Value::as_str).unwrap_or_default();
                calls.push(ToolCall::new(
                    "ran_slice_control",
                    json!({
                        "cell_id": cell,
                        "slice_id": rules.slice_id,
                        "new_scheduling_weight": rules.ran_control.scheduling_weight,
                        "rationale": format!("uplink utilization {util:.2} in {cell}"),
                    }),
                ));
            }
        }
        PlannerDecision::calls(calls)
    }

    fn monitor(&self, ctx: &PlannerContext) -> PlannerDecision {
        if let Some(spec) = ctx.last("generate_xapp_spec").iter().find(|r| r.ok) {
            return PlannerDecision::calls(vec![ToolCall::new("deploy_xapp", json!({ "spec": spec.result }))]);
        }
        let rules = &AdaptationRules::builtin().monitor;
        let p = &ctx.profile;
        let ues = &ctx.target_ue_ids;
        let mut thresholds = Vec::new();
        if let Some(l) = p.max_latency_ms {
            thresholds.push(json!({ "metric": "latency_ms", "comparator": "gt", "value": l, "consecutive_k": rules.consecutive_k }));
        }
        if let Some(u) = p.min_ul_mbps {
            thresholds.push(
                json!({ "metric": "throughput_mbps", "comparator": "lt", "value": u, "consecutive_k": rules.consecutive_k }),
            );
        }
        let mut args = json!({
            "metrics": rules.metrics,
            "selector": { "ue_ids": ues },
            "period_ms": rules.period_ms,
            "thresholds": thresholds,
            "predictor": rules.predictor,
            "track_inference": rules.track_inference && ctx.service_instance_id.is_some(),
        });
        if let (true, Some(i)) = (rules.track_inference, &ctx.service_instance_id) {
            args["instance_id"] = json!(i);
        }
        PlannerDecision::calls(vec![ToolCall::new("generate_xapp_spec", args)])
    }
}

impl Planner for ScriptedPlanner {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn decide(&self, ctx: &PlannerContext) -> Result<PlannerDecision, PlannerError> {
        Ok(match ctx.stage {
            Stage::Intent => self.intent(ctx),
            Stage::ModelMatch => self.model_match(ctx),
            Stage::AwaitModelChoice => self.model_choice(ctx),
            Stage::AwaitDeployConfirm => self.deploy_confirm(ctx),
            Stage::Deploy => self.deploy(ctx),
            Stage::Adapt => self.adapt(ctx),
            Stage::Monitor => self.monitor(ctx),
            Stage::Complete | Stage::Failed => PlannerDecision::default(),
        })
    }
}
