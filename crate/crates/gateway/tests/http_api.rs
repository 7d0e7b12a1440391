//! Endpoint contract: status codes, body shapes and the scripted drone flow.

mod common;

use axum::http::StatusCode;
use common::{app, call, call_raw, drone_cfg, drone_script, replay, step, SEED};
use edgeai_core::registry::ModelCard;
use edgeai_core::runner::{run_scenario, ScriptStep};
use serde_json::json;

#[tokio::test]
async fn empty_description_is_400() {
    let (_, app) = app();
    let (s, v) = call(&app, "POST", "/sessions", Some(json!({ "description": "  " }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("empty"));
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let (_, app) = app();
    let (s, v) = call_raw(&app, "POST", "/sessions", Some("{not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, _) = call(&app, "POST", "/sessions", Some(json!({ "desc": "x" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/sim/advance", Some(json!({ "ms": 15 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/sim/advance", Some(json!({ "ms": 0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let (_, app) = app();
    for uri in ["/sessions/sess-99", "/npcf/policies/pol-9", "/npcf/ues/nobody/effective-rules", "/edge/services/svc-9", "/nope"] {
        let (s, _) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
    }
    let (s, _) = call(&app, "POST", "/sessions/sess-99/messages", Some(json!({ "text": "hi" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "DELETE", "/edge/services/svc-9", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn out_of_turn_inputs_are_409() {
    let (_, app) = app();
    let script = drone_script();
    let mut session = None;
    for s in &script.steps[..3] {
        let (st, v) = step(&app, &mut session, s).await;
        assert!(st.is_success(), "{v}");
    }
    let id = session.unwrap();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/deploy-confirm"),
        Some(json!({ "accept": true, "deploy_at_ms": 1000 })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["stage"], "DEPLOY");
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/messages"), Some(json!({ "text": "hello" }))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/model-choice"), Some(json!({ "index": 0 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    call(&app, "POST", "/sim/advance", Some(json!({ "ms": 1000 }))).await;
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["stage"], "ADAPT", "waiting for the service to come up");
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/messages"), Some(json!({ "text": "hello" }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/deploy-confirm"), Some(json!({ "accept": true }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn bad_model_index_is_400() {
    let (_, app) = app();
    let script = drone_script();
    let mut session = None;
    for s in &script.steps[..2] {
        step(&app, &mut session, s).await;
    }
    let id = session.unwrap();
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/model-choice"), Some(json!({ "index": 99 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
}

#[tokio::test]
async fn drone_replay_over_http_completes() {
    let (_, app) = app();
    let id = replay(&app, &drone_script()).await;
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stage"], "COMPLETE");
    assert_eq!(v["session"]["stage"], "COMPLETE");
    assert_eq!(v["session_id"], id);
    let (_, t) = call(&app, "GET", "/sim/time", None).await;
    assert_eq!(t["t_ms"], 12000);
    let (_, svc) = call(&app, "GET", "/services", None).await;
    let running: Vec<_> = svc.as_array().unwrap().iter().filter(|i| i["state"] == "running").collect();
    assert_eq!(running.len(), 1, "{svc}");
    assert_eq!(Some(running[0]["instance_id"].as_str().unwrap()), v["session"]["service_instance_id"].as_str());
}

#[tokio::test]
async fn http_and_headless_runs_reach_the_same_session_state() {
    let (_, app) = app();
    let script = drone_script();
    let id = replay(&app, &script).await;
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let headless = run_scenario(&drone_cfg(), &script, SEED).unwrap().session.unwrap();
    assert_eq!(v["session"], serde_json::to_value(&headless).unwrap());
}

#[tokio::test]
async fn an_incomplete_script_stops_where_the_headless_run_does() {
    let (_, app) = app();
    let mut script = drone_script();
    script.steps.retain(|s| !matches!(s, ScriptStep::ChooseModel(_)));
    let mut session = None;
    let mut refused = None;
    for (i, s) in script.steps.iter().enumerate() {
        let (st, _) = step(&app, &mut session, s).await;
        if !st.is_success() {
            assert_eq!(st, StatusCode::CONFLICT);
            refused = Some(i + 1);
            break;
        }
    }
    let headless = run_scenario(&drone_cfg(), &script, SEED).unwrap();
    assert_eq!(headless.script_error.as_deref().map(|e| e.starts_with(&format!("step {}:", refused.unwrap()))), Some(true));
    let (_, v) = call(&app, "GET", &format!("/sessions/{}", session.unwrap()), None).await;
    assert_eq!(v["session"], serde_json::to_value(headless.session.unwrap()).unwrap());
}

#[tokio::test]
async fn session_listing_and_reply_fields() {
    let (_, app) = app();
    let (s, v) = call(&app, "POST", "/sessions", Some(json!({ "description": common_describe() }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["stage"], "INTENT");
    assert!(v["reply"].is_string(), "{v}");
    assert_eq!(v["created_at_ms"], 0);
    let (_, list) = call(&app, "GET", "/sessions", None).await;
    assert_eq!(list, json!([{ "session_id": v["session_id"], "stage": "INTENT" }]));
}

fn common_describe() -> String {
    match &drone_script().steps[0] {
        ScriptStep::Describe(d) => d.clone(),
        _ => unreachable!(),
    }
}

#[tokio::test]
async fn policy_endpoints() {
    let (_, app) = app();
    let body = json!({ "target_ue_ids": ["drone-1"], "gbr_ul_mbps": 5.0, "priority_level": 2 });
    let (s, created) = call(&app, "POST", "/npcf/policies", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{created}");
    let id = created["policy_id"].as_str().unwrap().to_string();
    assert!(id.starts_with("pol-"));
    let (s, got) = call(&app, "GET", &format!("/npcf/policies/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(got, created);

    let (s, upd) = call(
        &app,
        "PUT",
        &format!("/npcf/policies/{id}"),
        Some(json!({ "target_ue_ids": ["drone-1"], "gbr_ul_mbps": 7.0 })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{upd}");
    assert_eq!(upd["gbr_ul_mbps"], 7.0);
    let (s, rules) = call(&app, "GET", "/npcf/ues/drone-1/effective-rules", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rules["gbr_ul_mbps"], 7.0, "{rules}");

    let (s, _) = call(&app, "POST", "/npcf/policies", Some(json!({ "target_ue_ids": ["ghost"] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/npcf/policies", Some(json!({ "target_ue_ids": ["drone-1"], "gbr_ul_mbps": -1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/npcf/policies", Some(json!({ "target_ue_ids": ["drone-1"], "colour": "red" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "PUT", "/npcf/policies/pol-404", Some(json!({ "target_ue_ids": ["drone-1"] }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn edge_endpoints() {
    let (_, app) = app();
    let (_, nodes) = call(&app, "GET", "/edge/nodes", None).await;
    let ids: Vec<&str> = nodes.as_array().unwrap().iter().map(|n| n["node_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["cs-edge-1", "reg-edge-1"]);

    let mut card = ModelCard::new("acme/tiny-detector", &["object-detection"]);
    card.servable = true;
    card.assessed = true;
    let (s, inst) = call(
        &app,
        "POST",
        "/edge/services",
        Some(json!({ "model": card, "node_id": "reg-edge-1", "resources": { "cpu": 2, "mem_mb": 2048 } })),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{inst}");
    let id = inst["instance_id"].as_str().unwrap().to_string();
    assert_eq!(inst["state"], "pending");
    call(&app, "POST", "/sim/advance", Some(json!({ "ms": 20 }))).await;
    let (s, got) = call(&app, "GET", &format!("/edge/services/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(got["state"], "running");

    let (s, _) = call(
        &app,
        "POST",
        "/edge/services",
        Some(json!({ "model": card, "node_id": "cs-edge-1", "resources": { "cpu": 64 } })),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", "/edge/services", Some(json!({ "model": card, "node_id": "moon" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call(&app, "DELETE", &format!("/edge/services/{id}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (_, got) = call(&app, "GET", &format!("/edge/services/{id}"), None).await;
    assert_eq!(got["state"], "terminated");
    let (s, _) = call(&app, "DELETE", &format!("/edge/services/{id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
