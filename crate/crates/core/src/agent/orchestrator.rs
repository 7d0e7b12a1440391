use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::catalog::ToolCatalog;
use super::planner::{Planner, PlannerContext, PlannerDecision, ToolCall, ToolOutcome};
use super::{AgentError, Role, SessionState, Stage, TranscriptEntry};
use crate::edge::ServiceState;
use crate::events::{Event, EventKind};
use crate::monitor::{recommend, NodeOption, PolicyView, Situation};
use crate::sim::{SimTime, TICK_MS};
use crate::world::{World, WorldError};

/// Planner calls allowed within one stage before the session fails.
pub const MAX_STAGE_STEPS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub session_id: String,
    pub stage: Stage,
    /// Agent text produced while handling the input, if any.
    pub reply: Option<String>,
}

/// How a failed tool call affects its stage.
pub(crate) enum Failure {
    /// Recorded; the stage carries on.
    Soft(String),
    /// The session fails.
    Fatal(String),
    /// Back to INTENT.
    NoCandidates(String),
}

/// Owns the simulated deployment, every session and the planner.
pub struct Orchestrator {
    pub(super) world: World,
    planner: Box<dyn Planner>,
    sessions: BTreeMap<String, SessionState>,
    next_session: u64,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("planner", &self.planner.name())
            .field("sessions", &self.sessions.len())
            .finish_non_exhaustive()
    }
}

impl Orchestrator {
    pub fn new(world: World, planner: Box<dyn Planner>) -> Self {
        Self {
            world,
            planner,
            sessions: BTreeMap::new(),
            next_session: 0,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn planner_name(&self) -> &'static str {
        self.planner.name()
    }

    pub fn session(&self, id: &str) -> Result<&SessionState, AgentError> {
        self.sessions.get(id).ok_or_else(|| AgentError::UnknownSession(id.to_string()))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionState> {
        self.sessions.values()
    }

    pub fn drain_events(&mut self) -> Vec<Event> {
        self.world.drain_events()
    }

    pub fn start_session(&mut self, description: &str) -> Result<SessionState, AgentError> {
        if description.trim().is_empty() {
            return Err(AgentError::EmptyIntent);
        }
        self.next_session += 1;
        let id = format!("sess-{}", self.next_session);
        let mut s = SessionState::new(id.clone(), description, self.world.now());
        s.transcript.push(TranscriptEntry::Message {
            role: Role::User,
            text: description.to_string(),
        });
        self.step(&mut s, Some(description));
        if s.stage == Stage::Intent && s.pending_question.is_none() {
            if let Some(f) = s.profile.missing().first() {
                let q = super::ExtractionRules::builtin().question(f);
                self.say(&mut s, q);
            }
        }
        self.drive(&mut s);
        self.sessions.insert(id.clone(), s);
        Ok(self.sessions[&id].clone())
    }

    fn take(&mut self, id: &str) -> Result<SessionState, AgentError> {
        self.sessions.remove(id).ok_or_else(|| AgentError::UnknownSession(id.to_string()))
    }

    fn put(&mut self, s: SessionState, reply_from: usize) -> AgentReply {
        let reply = s.transcript[reply_from..].iter().rev().find_map(|e| match e {
            TranscriptEntry::Message { role: Role::Agent, text } => Some(text.clone()),
            _ => None,
        });
        let out = AgentReply {
            session_id: s.session_id.clone(),
            stage: s.stage,
            reply,
        };
        self.sessions.insert(s.session_id.clone(), s);
        out
    }

    fn out_of_turn(s: &SessionState) -> AgentError {
        AgentError::OutOfTurn {
            session_id: s.session_id.clone(),
            stage: s.stage,
        }
    }

    pub fn handle_message(&mut self, id: &str, text: &str) -> Result<AgentReply, AgentError> {
        let stage = self.session(id)?.stage;
        if !stage.is_interactive() {
            return Err(Self::out_of_turn(self.session(id)?));
        }
        if text.trim().is_empty() {
            return Err(AgentError::Invalid("message text must not be empty".into()));
        }
        let mut s = self.take(id)?;
        let mark = s.transcript.len();
        s.transcript.push(TranscriptEntry::Message {
            role: Role::User,
            text: text.to_string(),
        });
        self.step(&mut s, Some(text));
        self.drive(&mut s);
        Ok(self.put(s, mark))
    }

    /// Direct model selection, equivalent to a `select_model` tool call.
    pub fn choose_model(&mut self, id: &str, index: usize) -> Result<AgentReply, AgentError> {
        let s = self.session(id)?;
        if s.stage != Stage::AwaitModelChoice {
            return Err(Self::out_of_turn(s));
        }
        if index >= s.candidates.len() {
            return Err(AgentError::BadChoice {
                index,
                candidates: s.candidates.len(),
            });
        }
        let mut s = self.take(id)?;
        let mark = s.transcript.len();
        self.run_direct(&mut s, ToolCall::new("select_model", json!({ "index": index })));
        self.drive(&mut s);
        Ok(self.put(s, mark))
    }

    /// Direct answer to the deployment plan, equivalent to a
    /// `confirm_deployment` tool call.
    pub fn confirm_deployment(
        &mut self,
        id: &str,
        accept: bool,
        node_id: Option<&str>,
        deploy_at_ms: Option<SimTime>,
    ) -> Result<AgentReply, AgentError> {
        let s = self.session(id)?;
        if s.stage != Stage::AwaitDeployConfirm || s.plan.is_none() {
            return Err(Self::out_of_turn(s));
        }
        if let Some(n) = node_id {
            if self.world.edge().node(n).is_none() {
                return Err(AgentError::Invalid(format!("unknown edge node {n}")));
            }
        }
        let mut args = json!({ "accept": accept });
        if let Some(n) = node_id {
            args["node_id"] = json!(n);
        }
        if let Some(t) = deploy_at_ms {
            args["deploy_at_ms"] = json!(t);
        }
        let mut s = self.take(id)?;
        let mark = s.transcript.len();
        self.run_direct(&mut s, ToolCall::new("confirm_deployment", args));
        self.drive(&mut s);
        Ok(self.put(s, mark))
    }

    /// Advance simulated time, letting sessions progress after every tick.
    pub fn advance(&mut self, ms: SimTime) -> Result<(), WorldError> {
        if ms == 0 || ms % TICK_MS != 0 {
            return Err(crate::sim::SimError::TickMisaligned(ms).into());
        }
        for _ in 0..ms / TICK_MS {
            self.world.advance(TICK_MS)?;
            let ids: Vec<String> = self.sessions.keys().cloned().collect();
            for id in ids {
                let mut s = self.sessions.remove(&id).expect("listed session");
                self.drive(&mut s);
                self.refresh_recommendations(&mut s);
                self.sessions.insert(id, s);
            }
        }
        Ok(())
    }

    // stage machinery

    pub(super) fn say(&mut self, s: &mut SessionState, text: String) {
        s.transcript.push(TranscriptEntry::Message {
            role: Role::Agent,
            text: text.clone(),
        });
        let now = self.world.now();
        self.world.events_mut().push(
            now,
            EventKind::AgentMessage {
                session_id: s.session_id.clone(),
                text: text.clone(),
            },
        );
        s.pending_question = s.stage.is_interactive().then_some(text);
    }

    pub(super) fn set_stage(&mut self, s: &mut SessionState, to: Stage) {
        if s.stage == to {
            return;
        }
        let now = self.world.now();
        self.world.events_mut().push(
            now,
            EventKind::StageChange {
                session_id: s.session_id.clone(),
                from: s.stage.name().to_string(),
                to: to.name().to_string(),
            },
        );
        s.stage = to;
        s.stage_history.push((now, to));
        s.work.last_results.clear();
        s.work.stage_step = 0;
        if !to.is_interactive() {
            s.pending_question = None;
        }
    }

    pub(super) fn fail(&mut self, s: &mut SessionState, why: String) {
        s.failure = Some(format!("{}: {why}", s.stage.name()));
        self.set_stage(s, Stage::Failed);
        self.say(s, format!("Provisioning failed: {why}"));
    }

    fn context(&self, s: &SessionState, msg: Option<&str>) -> PlannerContext {
        PlannerContext {
            session_id: s.session_id.clone(),
            stage: s.stage,
            stage_step: s.work.stage_step,
            profile: s.profile.clone(),
            user_message: msg.map(String::from),
            searched_model_ids: s.work.searched.iter().map(|c| c.model_id.clone()).collect(),
            candidate_ids: s.candidates.iter().map(|c| c.model_id.clone()).collect(),
            chosen_model_id: s.chosen_model.as_ref().map(|c| c.model_id.clone()),
            plan: s.plan.clone(),
            service_instance_id: s.service_instance_id.clone(),
            service_node_id: s.service_node_id.clone(),
            qos_policy_id: s.qos_policy_id.clone(),
            steering_policy_id: s.steering_policy_id.clone(),
            target_ue_ids: s.target_ue_ids.clone(),
            node_ids: self.world.edge().nodes().map(|n| n.node_id.clone()).collect(),
            last_results: s.work.last_results.clone(),
            tools: ToolCatalog::builtin()
                .allowed(s.stage)
                .into_iter()
                .map(|t| t.name.clone())
                .collect(),
        }
    }

    /// Whether the session can make progress without user input.
    fn runnable(&mut self, s: &mut SessionState) -> bool {
        match s.stage {
            Stage::ModelMatch | Stage::Monitor => true,
            Stage::AwaitDeployConfirm => s.plan.is_none(),
            Stage::Deploy => s.plan.as_ref().is_some_and(|p| self.world.now() >= p.deploy_at_ms),
            Stage::Adapt => {
                let state = s
                    .service_instance_id
                    .as_deref()
                    .and_then(|i| self.world.edge().instance(i).ok())
                    .map(|i| i.state);
                match state {
                    Some(ServiceState::Running) => true,
                    Some(ServiceState::Failed | ServiceState::Terminated) | None => {
                        self.fail(s, "the service instance is not running".into());
                        false
                    }
                    _ => false,
                }
            }
            _ => false,
        }
    }

    fn drive(&mut self, s: &mut SessionState) {
        while self.runnable(s) {
            if s.work.stage_step >= MAX_STAGE_STEPS {
                let why = format!("no progress after {MAX_STAGE_STEPS} planner steps");
                self.fail(s, why);
                break;
            }
            self.step(s, None);
        }
    }

    /// One planner round trip: decide, check, execute, transition.
    fn step(&mut self, s: &mut SessionState, msg: Option<&str>) {
        let ctx = self.context(s, msg);
        s.work.stage_step += 1;
        let decision = match self.planner.decide(&ctx) {
            Ok(d) => d,
            Err(e) => {
                self.fail(s, e.to_string());
                return;
            }
        };
        if let Err(why) = self.check(s, &decision) {
            self.fail(s, why);
            return;
        }
        let stage = s.stage;
        if let Some(t) = decision.text.clone() {
            self.say(s, t);
        }
        let mut outcomes = Vec::new();
        for call in &decision.tool_calls {
            let (outcome, failure) = self.record_call(s, call);
            outcomes.push(outcome);
            match failure {
                None | Some(Failure::Soft(_)) => {}
                Some(Failure::Fatal(why)) => {
                    self.fail(s, format!("{} failed: {why}", call.tool));
                    return;
                }
                Some(Failure::NoCandidates(why)) => {
                    self.set_stage(s, Stage::Intent);
                    self.say(
                        s,
                        format!("{why}. Could you relax the latency bound or describe the task differently?"),
                    );
                    return;
                }
            }
            if s.stage != stage {
                break;
            }
        }
        if s.stage == stage {
            s.work.last_results = outcomes;
            self.after_step(s, &decision);
        }
    }

    /// Validate a whole decision before any of it runs. Rejected calls are
    /// still recorded so the transcript shows what was proposed.
    fn check(&mut self, s: &mut SessionState, d: &PlannerDecision) -> Result<(), String> {
        let cat = ToolCatalog::builtin();
        let bad = d.tool_calls.iter().find_map(|c| {
            cat.permit(s.stage, &c.tool)
                .and_then(|spec| spec.check_arguments(&c.arguments))
                .err()
                .map(|e| (c.clone(), e))
        });
        let Some((_, why)) = bad else { return Ok(()) };
        let kind = if d.tool_calls.iter().any(|c| cat.permit(s.stage, &c.tool).is_err()) {
            "CatalogViolation"
        } else {
            "InvalidArguments"
        };
        for c in &d.tool_calls {
            let call_id = s.next_call_id();
            s.transcript.push(TranscriptEntry::ToolCall {
                call_id: call_id.clone(),
                tool: c.tool.clone(),
                arguments: c.arguments.clone(),
            });
            let err = cat
                .permit(s.stage, &c.tool)
                .and_then(|spec| spec.check_arguments(&c.arguments))
                .err()
                .unwrap_or_else(|| "not executed: decision rejected".into());
            s.transcript.push(TranscriptEntry::ToolResult {
                call_id,
                tool: c.tool.clone(),
                ok: false,
                result: json!({ "error": format!("rejected: {err}") }),
            });
        }
        Err(format!("{kind}: {why}"))
    }

    fn record_call(&mut self, s: &mut SessionState, call: &ToolCall) -> (ToolOutcome, Option<Failure>) {
        let call_id = s.next_call_id();
        s.transcript.push(TranscriptEntry::ToolCall {
            call_id: call_id.clone(),
            tool: call.tool.clone(),
            arguments: call.arguments.clone(),
        });
        let mark = s.transcript.len();
        let (ok, result, failure) = match self.exec(s, call) {
            Ok(v) => (true, v, None),
            Err(f) => {
                let msg = match &f {
                    Failure::Soft(m) | Failure::Fatal(m) | Failure::NoCandidates(m) => m.clone(),
                };
                (false, json!({ "error": msg }), Some(f))
            }
        };
        // Messages said while the tool ran go after its result.
        let said = s.transcript.split_off(mark);
        s.transcript.push(TranscriptEntry::ToolResult {
            call_id: call_id.clone(),
            tool: call.tool.clone(),
            ok,
            result: result.clone(),
        });
        s.transcript.extend(said);
        (
            ToolOutcome {
                call_id,
                tool: call.tool.clone(),
                ok,
                result,
            },
            failure,
        )
    }

    /// Run a call issued through a direct endpoint rather than the planner.
    fn run_direct(&mut self, s: &mut SessionState, call: ToolCall) {
        let stage = s.stage;
        let (outcome, failure) = self.record_call(s, &call);
        if let Some(Failure::Fatal(why)) = failure {
            self.fail(s, format!("{} failed: {why}", call.tool));
            return;
        }
        if s.stage == stage {
            s.work.last_results = vec![outcome];
            self.after_step(s, &PlannerDecision::default());
        }
    }

    /// Stage transitions that depend on the state after a step.
    fn after_step(&mut self, s: &mut SessionState, d: &PlannerDecision) {
        match s.stage {
            Stage::Intent if s.profile.is_complete() => self.set_stage(s, Stage::ModelMatch),
            Stage::Adapt if d.tool_calls.is_empty() && s.work.stage_step > 1 => self.set_stage(s, Stage::Monitor),
            _ => {}
        }
    }

    // monitoring follow-up

    fn refresh_recommendations(&mut self, s: &mut SessionState) {
        if s.stage != Stage::Complete {
            return;
        }
        let alerts: Vec<_> = self
            .world
            .alerts()
            .into_iter()
            .filter(|a| s.xapp_ids.contains(&a.xapp_id))
            .collect();
        let signature: Vec<String> = alerts.iter().filter(|a| !a.cleared).map(|a| a.alert_id.clone()).collect();
        if signature == s.work.alert_signature {
            return;
        }
        s.work.alert_signature = signature;
        let period = self.world.report_period_ms();
        let reports: Vec<_> = s.xapp_ids.iter().filter_map(|x| self.world.report(x, period).ok()).collect();
        let recs = recommend(&alerts, &reports, &self.situation(s));
        if recs != s.recommendations {
            s.recommendations = recs.clone();
            let now = self.world.now();
            self.world.events_mut().push(
                now,
                EventKind::Recommendation {
                    session_id: s.session_id.clone(),
                    recommendations: recs,
                },
            );
        }
    }

    fn situation(&self, s: &SessionState) -> Situation {
        let cells = &s.profile.coverage_cell_ids;
        let edge = self.world.edge();
        let current = s.service_node_id.as_deref();
        let need = s.chosen_model.as_ref().map(|c| c.required_resources()).unwrap_or_default();
        Situation {
            service_node_id: current.map(String::from),
            service_latency_ms: current.and_then(|n| edge.node(n)).and_then(|n| n.latency_to(cells)),
            alternatives: edge
                .nodes()
                .filter(|n| Some(n.node_id.as_str()) != current && n.fits(&need))
                .filter_map(|n| {
                    n.latency_to(cells).map(|l| NodeOption {
                        node_id: n.node_id.clone(),
                        latency_ms: l,
                    })
                })
                .collect(),
            policy: s
                .qos_policy_id
                .as_deref()
                .and_then(|id| self.world.pcf().get(id).ok())
                .map(|p| PolicyView {
                    policy_id: p.policy_id.clone(),
                    gbr_ul_mbps: p.gbr_ul_mbps.unwrap_or(0.0),
                    mbr_ul_mbps: p.mbr_ul_mbps,
                }),
        }
    }
}
