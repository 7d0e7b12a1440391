//! Headless scenario runs from a script of user inputs and time steps.
//!
//! A script file is `{"steps": [...]}` where each step is one of
//!
//! ```text
//! {"describe": "..."}                       start the session
//! {"message": "..."}                        chat message
//! {"choose_model": 0}                       0-based candidate index
//! {"confirm_deploy": {"accept": true, "node_id": "...", "deploy_at_ms": 0}}
//! {"advance_ms": 1000}
//! ```
//!
//! The run stops at the first step the agent refuses.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, Orchestrator, Planner, ScriptedPlanner, SessionState, Stage};
use crate::events::{Event, EventKind};
use crate::monitor::{Alert, QosReport, Recommendation};
use crate::ric::ControlRecord;
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::sim::SimTime;
use crate::world::{World, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    Describe(String),
    Message(String),
    ChooseModel(usize),
    ConfirmDeploy {
        accept: bool,
        #[serde(default)]
        node_id: Option<String>,
        #[serde(default)]
        deploy_at_ms: Option<SimTime>,
    },
    AdvanceMs(SimTime),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Script(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| RunError::Script(format!("{}: {e}", p.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("script: {0}")]
    Script(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub seed: u64,
    pub planner: String,
    pub final_stage: Stage,
    /// Set when the run ended before COMPLETE: the stage it stopped in.
    pub failing_stage: Option<Stage>,
    /// First script step the agent refused, with the reason.
    pub script_error: Option<String>,
    pub final_t_ms: SimTime,
    pub session: Option<SessionState>,
    pub alerts: Vec<Alert>,
    pub controls: Vec<ControlRecord>,
    /// Whole-run statistics per xApp.
    pub qos_summary: BTreeMap<String, QosReport>,
    /// Periodic reports in publication order.
    pub reports: Vec<QosReport>,
    pub recommendations: Vec<Recommendation>,
    pub event_counts: BTreeMap<String, u64>,
}

impl ScenarioResult {
    pub fn is_complete(&self) -> bool {
        self.final_stage == Stage::Complete
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }
}

fn event_name(e: &Event) -> &'static str {
    match e.kind {
        EventKind::MetricSample { .. } => "metric_sample",
        EventKind::Alert { .. } => "alert",
        EventKind::QosReport { .. } => "qos_report",
        EventKind::StageChange { .. } => "stage_change",
        EventKind::Recommendation { .. } => "recommendation",
        EventKind::AgentMessage { .. } => "agent_message",
    }
}

/// Outcome of applying one step.
pub fn apply_step(orch: &mut Orchestrator, session: &mut Option<String>, step: &ScriptStep) -> Result<(), String> {
    let need = |s: &Option<String>| s.clone().ok_or_else(|| "no session yet: the script must start with describe".to_string());
    let agent = |e: AgentError| e.to_string();
    match step {
        ScriptStep::Describe(text) => {
            let s = orch.start_session(text).map_err(agent)?;
            *session = Some(s.session_id);
        }
        ScriptStep::Message(text) => {
            orch.handle_message(&need(session)?, text).map_err(agent)?;
        }
        ScriptStep::ChooseModel(i) => {
            orch.choose_model(&need(session)?, *i).map_err(agent)?;
        }
        ScriptStep::ConfirmDeploy {
            accept,
            node_id,
            deploy_at_ms,
        } => {
            orch.confirm_deployment(&need(session)?, *accept, node_id.as_deref(), *deploy_at_ms)
                .map_err(agent)?;
        }
        ScriptStep::AdvanceMs(ms) => orch.advance(*ms).map_err(|e| e.to_string())?,
    }
    Ok(())
}

pub fn run_with(cfg: &ScenarioConfig, script: &Script, seed: u64, planner: Box<dyn Planner>) -> Result<ScenarioResult, RunError> {
    let world = World::from_scenario(cfg, seed)?;
    let mut orch = Orchestrator::new(world, planner);
    let mut session = None;
    let mut script_error = None;
    let mut events = Vec::new();
    for (i, step) in script.steps.iter().enumerate() {
        let r = apply_step(&mut orch, &mut session, step);
        events.extend(orch.drain_events());
        if let Err(e) = r {
            script_error = Some(format!("step {}: {e}", i + 1));
            break;
        }
    }
    Ok(collect(&orch, session.as_deref(), script_error, cfg, seed, &events))
}

/// Assemble the result file contents from a finished orchestrator.
pub fn collect(
    orch: &Orchestrator,
    session_id: Option<&str>,
    script_error: Option<String>,
    cfg: &ScenarioConfig,
    seed: u64,
    events: &[Event],
) -> ScenarioResult {
    let world = orch.world();
    let session = session_id.and_then(|id| orch.session(id).ok()).cloned();
    let final_stage = session.as_ref().map_or(Stage::Intent, |s| s.stage);
    let xapps: Vec<String> = session.as_ref().map(|s| s.xapp_ids.clone()).unwrap_or_default();
    let now = world.now();
    let qos_summary = xapps
        .iter()
        .filter_map(|x| world.report(x, now.max(1)).ok().map(|r| (x.clone(), r)))
        .collect();
    let mut event_counts = BTreeMap::new();
    for e in events {
        *event_counts.entry(event_name(e).to_string()).or_insert(0) += 1;
    }
    ScenarioResult {
        scenario: cfg.name.clone(),
        seed,
        planner: orch.planner_name().to_string(),
        final_stage,
        failing_stage: (final_stage != Stage::Complete).then(|| match &session {
            Some(s) if s.stage == Stage::Failed => s
                .stage_history
                .iter()
                .rev()
                .map(|(_, st)| *st)
                .find(|st| *st != Stage::Failed)
                .unwrap_or(Stage::Intent),
            _ => final_stage,
        }),
        script_error,
        final_t_ms: now,
        recommendations: session.as_ref().map(|s| s.recommendations.clone()).unwrap_or_default(),
        session,
        alerts: world.alerts(),
        controls: world.ric().controls().to_vec(),
        qos_summary,
        reports: events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::QosReport { report } => Some(report.clone()),
                _ => None,
            })
            .collect(),
        event_counts,
    }
}

/// Run with the scripted planner.
pub fn run_scenario(cfg: &ScenarioConfig, script: &Script, seed: u64) -> Result<ScenarioResult, RunError> {
    run_with(cfg, script, seed, Box::new(ScriptedPlanner))
}

pub fn run_scenario_files(scenario: impl AsRef<Path>, script: impl AsRef<Path>, seed: u64) -> Result<ScenarioResult, RunError> {
    let cfg = ScenarioConfig::load(scenario)?;
    let script = Script::load(script)?;
    run_scenario(&cfg, &script, seed)
}
