//! Session lifecycle through the orchestrator with the rule-driven planner
//! and with stub planners.

mod common;

use std::sync::Arc;
use std::time::Duration;

use common::stub_server::scripted_reply;
use common::{drone_cfg, drone_orchestrator, orchestrator_with, DESCRIBE, REQUIREMENTS};
use edgeai_core::agent::{
    ActionKind, ActionPayload, AgentError, ExtractionRules, Orchestrator, Planner, PlannerContext,
    PlannerDecision, PlannerError, RemotePlanner, ScriptedPlanner, SessionState, Stage, ToolCall,
    TranscriptEntry,
};
use serde_json::{json, Value};

fn run_drone(orch: &mut Orchestrator, choice: usize, requirements: &str) -> String {
    let id = orch.start_session(DESCRIBE).unwrap().session_id;
    orch.handle_message(&id, requirements).unwrap();
    assert_eq!(orch.session(&id).unwrap().stage, Stage::AwaitModelChoice);
    orch.choose_model(&id, choice).unwrap();
    assert_eq!(orch.session(&id).unwrap().stage, Stage::AwaitDeployConfirm);
    orch.confirm_deployment(&id, true, None, None).unwrap();
    orch.advance(200).unwrap();
    id
}

fn assert_transcript_paired(s: &SessionState) {
    let mut n = 0;
    let mut it = s.transcript.iter().peekable();
    while let Some(e) = it.next() {
        if let TranscriptEntry::ToolCall { call_id, tool, .. } = e {
            n += 1;
            assert_eq!(call_id, &format!("call-{n}"));
            match it.next() {
                Some(TranscriptEntry::ToolResult { call_id: c, tool: t, .. }) => {
                    assert_eq!((c, t), (call_id, tool));
                }
                other => panic!("{call_id} not followed by its result: {other:?}"),
            }
        }
    }
    assert!(n > 0);
}

#[test]
fn extraction_of_drone_requirements() {
    let r = ExtractionRules::builtin();
    let d = r.extract(DESCRIBE);
    assert_eq!(d.application_category.as_deref(), Some("object_detection"));
    assert_eq!(d.device_type.as_deref(), Some("drone"));
    let u = r.extract(REQUIREMENTS);
    assert_eq!(u.max_latency_ms, Some(50.0));
    assert_eq!(u.device_count, Some(4));
    assert_eq!(u.min_ul_mbps, Some(5.0));
    assert_eq!(u.coverage_cell_ids.as_deref(), Some(&["cell-1".to_string()][..]));
    let v = r.extract("need 12 cameras on cell-3 and cell-7 at most 80ms, 2.5 Mbps UL");
    assert_eq!(v.device_count, Some(12));
    assert_eq!(v.max_latency_ms, Some(80.0));
    assert_eq!(v.min_ul_mbps, Some(2.5));
    assert_eq!(v.coverage_cell_ids.unwrap(), vec!["cell-3".to_string(), "cell-7".to_string()]);
}

#[test]
fn intent_asks_until_profile_complete() {
    let mut orch = drone_orchestrator();
    let s = orch.start_session(DESCRIBE).unwrap();
    assert_eq!(s.stage, Stage::Intent);
    assert!(s.pending_question.is_some());
    let id = s.session_id;
    orch.handle_message(&id, "latency under 50 ms").unwrap();
    assert_eq!(orch.session(&id).unwrap().stage, Stage::Intent);
    orch.handle_message(&id, "4 drones, cell-1, 5 Mbps uplink each").unwrap();
    assert_eq!(orch.session(&id).unwrap().stage, Stage::AwaitModelChoice);
    assert!(matches!(orch.start_session("  "), Err(AgentError::EmptyIntent)));
}

#[test]
fn drone_session_completes_with_expected_actions() {
    let mut orch = drone_orchestrator();
    let id = run_drone(&mut orch, 0, REQUIREMENTS);
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Complete, "{:?}", s.failure);
    assert_transcript_paired(s);

    let idx: Vec<usize> = s.stage_history.iter().map(|(_, st)| st.index()).collect();
    assert!(idx.windows(2).all(|w| w[0] < w[1]), "{:?}", s.stage_history);
    assert_eq!(s.stage_history.len(), Stage::PIPELINE.len());

    let plan = s.plan.as_ref().unwrap();
    assert_eq!(plan.node_id, "cs-edge-1");
    assert_eq!(s.service_node_id.as_deref(), Some("cs-edge-1"));

    let kinds: Vec<ActionKind> = s.applied_actions.iter().map(|a| a.kind).collect();
    assert_eq!(kinds, vec![ActionKind::CreateQosPolicy, ActionKind::SteerTraffic, ActionKind::RanSliceControl]);
    let ActionPayload::Policy(p) = &s.applied_actions[0].payload else { panic!("policy payload") };
    assert_eq!(p.gbr_ul_mbps, Some(20.0));
    assert_eq!(p.mbr_ul_mbps, Some(30.0));
    assert_eq!(p.priority_level, Some(5));
    assert_eq!(p.slice_id.as_deref(), Some("edge-ai"));
    let mut targets = p.target_ue_ids.clone();
    targets.sort();
    assert_eq!(targets, ["drone-1", "drone-2", "drone-3", "drone-4"]);
    let ActionPayload::Policy(steer) = &s.applied_actions[1].payload else { panic!("steering payload") };
    assert_eq!(steer.steering_dest_node_id.as_deref(), Some("cs-edge-1"));
    let ActionPayload::Control(c) = &s.applied_actions[2].payload else { panic!("control payload") };
    assert_eq!(c.new_scheduling_weight, Some(2.0));
    assert!(s.applied_actions.iter().all(|a| !a.rationale.is_empty()));

    assert_eq!(s.control_acks.len(), 1);
    assert!((10..=1000).contains(&s.control_acks[0].delay_ms()));
    assert_eq!(s.xapp_ids.len(), 1);
    let w = orch.world();
    assert_eq!(w.pcf().policies().count(), 2);
    assert_eq!(w.ric().xapps().count(), 1);
    let ep = w.resolve_service_endpoint("drone-1").unwrap().unwrap();
    assert_eq!(ep.host, "cs-edge-1");
}

#[test]
fn third_candidate_can_be_chosen() {
    let mut orch = drone_orchestrator();
    let id = run_drone(&mut orch, 2, REQUIREMENTS);
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Complete);
    assert_eq!(s.chosen_model.as_ref().unwrap().model_id, s.candidates[2].model_id);
    assert_eq!(s.plan.as_ref().unwrap().model_id, s.candidates[2].model_id);
}

#[test]
fn out_of_turn_and_bad_choice() {
    let mut orch = drone_orchestrator();
    let id = orch.start_session(DESCRIBE).unwrap().session_id;
    assert!(matches!(orch.choose_model(&id, 0), Err(AgentError::OutOfTurn { stage: Stage::Intent, .. })));
    assert!(matches!(orch.confirm_deployment(&id, true, None, None), Err(AgentError::OutOfTurn { .. })));
    orch.handle_message(&id, REQUIREMENTS).unwrap();
    let n = orch.session(&id).unwrap().candidates.len();
    assert!(matches!(orch.choose_model(&id, n), Err(AgentError::BadChoice { .. })));
    assert!(matches!(orch.handle_message("sess-99", "hi"), Err(AgentError::UnknownSession(_))));
    orch.choose_model(&id, 0).unwrap();
    orch.confirm_deployment(&id, true, None, None).unwrap();
    assert!(matches!(orch.handle_message(&id, "hello"), Err(AgentError::OutOfTurn { .. })));
}

#[test]
fn relaxed_latency_gets_lower_priority() {
    let mut orch = drone_orchestrator();
    let id = run_drone(&mut orch, 0, "latency under 200 ms, 4 drones, cell-1, 5 Mbps uplink each");
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Complete);
    let ActionPayload::Policy(p) = &s.applied_actions[0].payload else { panic!() };
    assert_eq!(p.priority_level, Some(7));
}

#[test]
fn lightly_loaded_cell_gets_no_ran_control() {
    let mut cfg = drone_cfg();
    for f in &mut cfg.flows {
        if f.flow_id == "bg-1-ul" {
            f.offered_mbps = 10.0;
        }
    }
    let mut orch = orchestrator_with(&cfg, Box::new(ScriptedPlanner));
    let id = run_drone(&mut orch, 0, REQUIREMENTS);
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Complete);
    assert!(s.applied_actions.iter().all(|a| a.kind != ActionKind::RanSliceControl));
    assert!(orch.world().ric().controls().is_empty());
}

#[test]
fn rejecting_without_node_asks_for_one() {
    let mut orch = drone_orchestrator();
    let id = orch.start_session(DESCRIBE).unwrap().session_id;
    orch.handle_message(&id, REQUIREMENTS).unwrap();
    orch.choose_model(&id, 0).unwrap();
    orch.confirm_deployment(&id, false, None, None).unwrap();
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::AwaitDeployConfirm);
    assert!(s.pending_question.as_deref().unwrap().contains("edge node"));
    orch.handle_message(&id, "use reg-edge-1 instead").unwrap();
    let s = orch.session(&id).unwrap();
    assert_eq!(s.plan.as_ref().unwrap().node_id, "reg-edge-1");
    orch.handle_message(&id, "yes, deploy").unwrap();
    orch.advance(200).unwrap();
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Complete);
    assert_eq!(s.service_node_id.as_deref(), Some("reg-edge-1"));
}

/// Behaves like the rule-driven planner except in `stage`.
struct Sabotage {
    stage: Stage,
    decision: Result<PlannerDecision, PlannerError>,
}

impl Planner for Sabotage {
    fn name(&self) -> &'static str {
        "sabotage"
    }

    fn decide(&self, ctx: &PlannerContext) -> Result<PlannerDecision, PlannerError> {
        if ctx.stage == self.stage {
            self.decision.clone()
        } else {
            ScriptedPlanner.decide(ctx)
        }
    }
}

fn reboot() -> PlannerDecision {
    PlannerDecision {
        tool_calls: vec![
            ToolCall::new("create_qos_policy", json!({"target_ue_ids": ["drone-1"], "gbr_ul_mbps": 5.0})),
            ToolCall::new("reboot_gnb", json!({"cell_id": "cell-1"})),
        ],
        ..Default::default()
    }
}

fn drive_to_failure(planner: Box<dyn Planner>) -> (Orchestrator, String) {
    let mut orch = orchestrator_with(&drone_cfg(), planner);
    let id = orch.start_session(DESCRIBE).unwrap().session_id;
    orch.handle_message(&id, REQUIREMENTS).unwrap();
    if orch.session(&id).unwrap().stage == Stage::AwaitModelChoice {
        orch.choose_model(&id, 0).unwrap();
        orch.confirm_deployment(&id, true, None, None).unwrap();
        orch.advance(200).unwrap();
    }
    (orch, id)
}

#[test]
fn out_of_catalog_action_fails_without_side_effects() {
    let before = drone_orchestrator().world().fingerprint();
    let (orch, id) = drive_to_failure(Box::new(Sabotage { stage: Stage::ModelMatch, decision: Ok(reboot()) }));
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Failed);
    assert!(s.failure.as_deref().unwrap().contains("CatalogViolation"), "{:?}", s.failure);
    assert_eq!(orch.world().fingerprint(), before);
    let rejected: Vec<&TranscriptEntry> = s
        .transcript
        .iter()
        .filter(|e| matches!(e, TranscriptEntry::ToolResult { ok: false, result, .. } if result["error"].as_str().is_some_and(|m| m.starts_with("rejected"))))
        .collect();
    assert_eq!(rejected.len(), 2);
}

#[test]
fn out_of_catalog_action_in_adapt_touches_nothing() {
    let (sab, sid) = drive_to_failure(Box::new(Sabotage { stage: Stage::Adapt, decision: Ok(reboot()) }));
    let (quiet, qid) = drive_to_failure(Box::new(Sabotage {
        stage: Stage::Adapt,
        decision: Err(PlannerError::RemoteUnreachable("test".into())),
    }));
    let s = sab.session(&sid).unwrap();
    assert_eq!(s.stage, Stage::Failed);
    assert!(s.failure.as_deref().unwrap().contains("CatalogViolation"));
    assert_eq!(quiet.session(&qid).unwrap().stage, Stage::Failed);
    let fp = sab.world().fingerprint();
    assert_eq!(fp, quiet.world().fingerprint());
    assert!(fp.policies.is_empty() && fp.controls.is_empty() && fp.xapps.is_empty());
    assert_eq!(fp.instances.len(), 1);
}

#[test]
fn missing_required_argument_is_rejected() {
    let bad = PlannerDecision {
        tool_calls: vec![ToolCall::new("search_models", json!({"limit": 3}))],
        ..Default::default()
    };
    let (orch, id) = drive_to_failure(Box::new(Sabotage { stage: Stage::ModelMatch, decision: Ok(bad) }));
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Failed);
    assert!(s.failure.as_deref().unwrap().contains("InvalidArguments"), "{:?}", s.failure);
}

#[test]
fn remote_planner_through_stub_endpoint_matches_scripted() {
    let stub = common::stub_server::serve(Arc::new(|_, body: &str| scripted_reply(body)));
    let remote = RemotePlanner::new(stub.url.clone(), Some("k".into()), None, Duration::from_secs(5));
    let mut orch = orchestrator_with(&drone_cfg(), Box::new(remote));
    let id = run_drone(&mut orch, 0, REQUIREMENTS);
    let mut local = drone_orchestrator();
    let lid = run_drone(&mut local, 0, REQUIREMENTS);
    let (r, l) = (orch.session(&id).unwrap(), local.session(&lid).unwrap());
    assert_eq!(r.stage, Stage::Complete);
    assert_eq!(r.transcript, l.transcript);
    assert_eq!(orch.world().fingerprint(), local.world().fingerprint());
    assert!(stub.hits.load(std::sync::atomic::Ordering::SeqCst) > 5);
}

#[test]
fn remote_out_of_catalog_reply_fails_cleanly() {
    let stub = common::stub_server::serve(Arc::new(|_, body: &str| {
        let req: Value = serde_json::from_str(body).unwrap();
        let ctx: Value = serde_json::from_str(req["messages"][1]["content"].as_str().unwrap()).unwrap();
        if ctx["stage"] == "ADAPT" {
            (200, json!({"tool_call": {"tool": "reboot_gnb", "arguments": {"cell_id": "cell-1"}}}).to_string())
        } else {
            scripted_reply(body)
        }
    }));
    let remote = RemotePlanner::new(stub.url.clone(), None, None, Duration::from_secs(5));
    let (orch, id) = drive_to_failure(Box::new(remote));
    let s = orch.session(&id).unwrap();
    assert_eq!(s.stage, Stage::Failed);
    assert!(s.failure.as_deref().unwrap().contains("reboot_gnb"));
    let fp = orch.world().fingerprint();
    assert!(fp.policies.is_empty() && fp.controls.is_empty() && fp.xapps.is_empty());
}

fn blank_context() -> PlannerContext {
    serde_json::from_value(json!({
        "session_id": "s", "stage": "MODEL_MATCH", "stage_step": 0,
        "profile": edgeai_core::agent::UseCaseProfile::new("x"),
        "user_message": null, "searched_model_ids": [], "candidate_ids": [],
        "chosen_model_id": null, "plan": null, "service_instance_id": null,
        "service_node_id": null, "qos_policy_id": null, "steering_policy_id": null,
        "target_ue_ids": [], "node_ids": [], "last_results": [], "tools": []
    }))
    .unwrap()
}

#[test]
fn remote_retries_malformed_replies() {
    let stub = common::stub_server::serve(Arc::new(|n, _: &str| {
        if n < 2 {
            (200, "<html>busy</html>".into())
        } else {
            (200, r#"{"text": "ready"}"#.into())
        }
    }));
    let p = RemotePlanner::new(stub.url, None, None, Duration::from_secs(5));
    let d = p.decide(&blank_context()).unwrap();
    assert_eq!(d.retries, 2);
    assert_eq!(d.text.as_deref(), Some("ready"));

    let stub = common::stub_server::serve(Arc::new(|_, _: &str| (200, "{}".into())));
    let p = RemotePlanner::new(stub.url, None, None, Duration::from_secs(5));
    assert!(matches!(p.decide(&blank_context()), Err(PlannerError::MalformedReply { attempts: 3, .. })));
    assert_eq!(stub.hits.load(std::sync::atomic::Ordering::SeqCst), 3);

    let stub = common::stub_server::serve(Arc::new(|_, _: &str| (503, "down".into())));
    let p = RemotePlanner::new(stub.url, None, None, Duration::from_secs(5));
    assert!(matches!(p.decide(&blank_context()), Err(PlannerError::RemoteUnreachable(_))));
}

#[test]
fn request_body_lists_only_stage_tools() {
    let p = RemotePlanner::new("http://127.0.0.1:9", None, None, Duration::from_secs(1));
    let body = p.request_body(&blank_context());
    assert_eq!(body["temperature"], 0);
    let names: Vec<&str> = body["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"search_models"));
    assert!(!names.contains(&"create_qos_policy"));
}
