//! The provisioning agent: a staged task graph driven by a planner.
//!
//! ```text
//! INTENT -> MODEL_MATCH -> AWAIT_MODEL_CHOICE -> AWAIT_DEPLOY_CONFIRM
//!        -> DEPLOY -> ADAPT -> MONITOR -> COMPLETE
//! ```
//!
//! Any stage may end in FAILED. MODEL_MATCH returns to INTENT when no model
//! survives filtering. The planner proposes tool calls; the orchestrator
//! checks each decision against the tool catalog and the current stage
//! before running any of it, and decides stage transitions itself.

pub mod catalog;
mod orchestrator;
pub mod planner;
pub mod profile;
pub mod remote;
mod tools;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::edge::Resources;
use crate::monitor::Recommendation;
use crate::pcf::QosPolicy;
use crate::registry::ModelCard;
use crate::ric::{ControlAck, ControlRequest};
use crate::sim::SimTime;

pub use catalog::{AdaptationRules, ToolCatalog, ToolSpec};
pub use orchestrator::{AgentReply, Orchestrator, MAX_STAGE_STEPS};
pub use planner::{Planner, PlannerContext, PlannerDecision, PlannerError, ScriptedPlanner, ToolCall, ToolOutcome};
pub use profile::{ExtractionRules, ProfileStatus, ProfileUpdate, UseCaseProfile};
pub use remote::RemotePlanner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Intent,
    ModelMatch,
    AwaitModelChoice,
    AwaitDeployConfirm,
    Deploy,
    Adapt,
    Monitor,
    Complete,
    Failed,
}

impl Stage {
    pub const PIPELINE: [Stage; 8] = [
        Stage::Intent,
        Stage::ModelMatch,
        Stage::AwaitModelChoice,
        Stage::AwaitDeployConfirm,
        Stage::Deploy,
        Stage::Adapt,
        Stage::Monitor,
        Stage::Complete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Intent => "INTENT",
            Stage::ModelMatch => "MODEL_MATCH",
            Stage::AwaitModelChoice => "AWAIT_MODEL_CHOICE",
            Stage::AwaitDeployConfirm => "AWAIT_DEPLOY_CONFIRM",
            Stage::Deploy => "DEPLOY",
            Stage::Adapt => "ADAPT",
            Stage::Monitor => "MONITOR",
            Stage::Complete => "COMPLETE",
            Stage::Failed => "FAILED",
        }
    }

    /// Position along the pipeline; FAILED sorts last.
    pub fn index(self) -> usize {
        Self::PIPELINE.iter().position(|s| *s == self).unwrap_or(Self::PIPELINE.len())
    }

    /// Stages that wait for the user.
    pub fn is_interactive(self) -> bool {
        matches!(self, Stage::Intent | Stage::AwaitModelChoice | Stage::AwaitDeployConfirm)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Complete | Stage::Failed)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node_id: String,
    pub latency_ms: f64,
    pub free_cpu_fraction: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub model_id: String,
    pub node_id: String,
    pub resources: Resources,
    /// Simulated time at which deployment starts.
    pub deploy_at_ms: SimTime,
    pub score: f64,
    /// Every feasible node, best first.
    pub scores: Vec<NodeScore>,
}

/// Share of the placement score given to latency; the rest goes to free CPU.
pub const LATENCY_WEIGHT: f64 = 0.7;
/// Latency budget for placement as a fraction of the end-to-end bound.
pub const LATENCY_BUDGET_SHARE: f64 = 0.3;

pub fn placement_score(latency_ms: f64, max_latency_ms: f64, free_cpu_fraction: f64) -> f64 {
    let budget = LATENCY_BUDGET_SHARE * max_latency_ms;
    LATENCY_WEIGHT * (1.0 - latency_ms / budget) + (1.0 - LATENCY_WEIGHT) * free_cpu_fraction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    CreateQosPolicy,
    UpdateQosPolicy,
    SteerTraffic,
    RanSliceControl,
}

impl ActionKind {
    pub fn from_tool(tool: &str) -> Option<Self> {
        Some(match tool {
            "create_qos_policy" => ActionKind::CreateQosPolicy,
            "update_qos_policy" => ActionKind::UpdateQosPolicy,
            "steer_traffic" => ActionKind::SteerTraffic,
            "ran_slice_control" => ActionKind::RanSliceControl,
            _ => return None,
        })
    }
}

pub fn is_network_action(tool: &str) -> bool {
    ActionKind::from_tool(tool).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionPayload {
    Policy(QosPolicy),
    Control(ControlRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAction {
    pub kind: ActionKind,
    pub payload: ActionPayload,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Message {
        role: Role,
        text: String,
    },
    ToolCall {
        call_id: String,
        tool: String,
        arguments: serde_json::Value,
    },
    ToolResult {
        call_id: String,
        tool: String,
        ok: bool,
        result: serde_json::Value,
    },
}

/// Scratch state that is not part of the published session.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Work {
    pub searched: Vec<ModelCard>,
    pub readmes: BTreeMap<String, Option<String>>,
    pub last_results: Vec<ToolOutcome>,
    pub stage_step: u32,
    pub alert_signature: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub stage: Stage,
    pub profile: UseCaseProfile,
    pub candidates: Vec<ModelCard>,
    pub chosen_model: Option<ModelCard>,
    pub plan: Option<DeploymentPlan>,
    pub service_instance_id: Option<String>,
    pub service_node_id: Option<String>,
    pub qos_policy_id: Option<String>,
    pub steering_policy_id: Option<String>,
    pub target_ue_ids: Vec<String>,
    pub applied_actions: Vec<NetworkAction>,
    pub control_acks: Vec<ControlAck>,
    pub xapp_ids: Vec<String>,
    pub transcript: Vec<TranscriptEntry>,
    /// Last question put to the user, while one is open.
    pub pending_question: Option<String>,
    pub failure: Option<String>,
    pub recommendations: Vec<Recommendation>,
    /// Stage entries with the simulated time they happened.
    pub stage_history: Vec<(SimTime, Stage)>,
    #[serde(skip)]
    pub(crate) work: Work,
}

impl SessionState {
    pub(crate) fn new(session_id: String, description: &str, now: SimTime) -> Self {
        Self {
            session_id,
            stage: Stage::Intent,
            profile: UseCaseProfile::new(description),
            candidates: Vec::new(),
            chosen_model: None,
            plan: None,
            service_instance_id: None,
            service_node_id: None,
            qos_policy_id: None,
            steering_policy_id: None,
            target_ue_ids: Vec::new(),
            applied_actions: Vec::new(),
            control_acks: Vec::new(),
            xapp_ids: Vec::new(),
            transcript: Vec::new(),
            pending_question: None,
            failure: None,
            recommendations: Vec::new(),
            stage_history: vec![(now, Stage::Intent)],
            work: Work::default(),
        }
    }

    pub(crate) fn next_call_id(&self) -> String {
        let n = self
            .transcript
            .iter()
            .filter(|e| matches!(e, TranscriptEntry::ToolCall { .. }))
            .count();
        format!("call-{}", n + 1)
    }

    /// Tool calls in transcript order.
    pub fn tool_calls(&self) -> impl Iterator<Item = (&str, &serde_json::Value)> {
        self.transcript.iter().filter_map(|e| match e {
            TranscriptEntry::ToolCall { tool, arguments, .. } => Some((tool.as_str(), arguments)),
            _ => None,
        })
    }

    /// Successful results for `tool`, in order.
    pub fn results_of<'a>(&'a self, tool: &'a str) -> impl Iterator<Item = &'a serde_json::Value> + 'a {
        self.transcript.iter().filter_map(move |e| match e {
            TranscriptEntry::ToolResult { tool: t, ok: true, result, .. } if t == tool => Some(result),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("the description must not be empty")]
    EmptyIntent,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {session_id} is in stage {stage}, which does not take this input")]
    OutOfTurn { session_id: String, stage: Stage },
    #[error("model index {index} is out of range for {candidates} candidates")]
    BadChoice { index: usize, candidates: usize },
    #[error("{0}")]
    Invalid(String),
}
