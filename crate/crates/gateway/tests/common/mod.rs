#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use edgeai_core::agent::{Orchestrator, ScriptedPlanner};
use edgeai_core::runner::{Script, ScriptStep};
use edgeai_core::scenario::ScenarioConfig;
use edgeai_core::world::World;
use edgeai_gateway::{api, Gateway};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const SEED: u64 = 1;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn drone_scenario() -> PathBuf {
    fixtures().join("scenarios/drone.json")
}

pub fn drone_script_path() -> PathBuf {
    fixtures().join("scenarios/drone_script.json")
}

pub fn drone_cfg() -> ScenarioConfig {
    ScenarioConfig::load(drone_scenario()).unwrap()
}

pub fn drone_script() -> Script {
    Script::load(drone_script_path()).unwrap()
}

pub fn gateway() -> Arc<Gateway> {
    let world = World::from_scenario(&drone_cfg(), SEED).unwrap();
    Arc::new(Gateway::new(Orchestrator::new(world, Box::new(ScriptedPlanner))))
}

pub fn app() -> (Arc<Gateway>, Router) {
    let gw = gateway();
    (gw.clone(), api::router(gw))
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let text = body.map(|b| b.to_string());
    call_raw(app, method, uri, text.as_deref()).await
}

/// Issue the HTTP request equivalent to one script step.
pub async fn step(app: &Router, session: &mut Option<String>, s: &ScriptStep) -> (StatusCode, Value) {
    let sid = || session.clone().expect("describe comes first");
    let (status, v) = match s {
        ScriptStep::Describe(d) => call(app, "POST", "/sessions", Some(json!({ "description": d }))).await,
        ScriptStep::Message(t) => call(app, "POST", &format!("/sessions/{}/messages", sid()), Some(json!({ "text": t }))).await,
        ScriptStep::ChooseModel(i) => call(app, "POST", &format!("/sessions/{}/model-choice", sid()), Some(json!({ "index": i }))).await,
        ScriptStep::ConfirmDeploy {
            accept,
            node_id,
            deploy_at_ms,
        } => {
            let mut b = json!({ "accept": accept });
            if let Some(n) = node_id {
                b["node_id"] = json!(n);
            }
            if let Some(t) = deploy_at_ms {
                b["deploy_at_ms"] = json!(t);
            }
            call(app, "POST", &format!("/sessions/{}/deploy-confirm", sid()), Some(b)).await
        }
        ScriptStep::AdvanceMs(ms) => call(app, "POST", "/sim/advance", Some(json!({ "ms": ms }))).await,
    };
    if let ScriptStep::Describe(_) = s {
        if status.is_success() {
            *session = Some(v["session_id"].as_str().unwrap().to_string());
        }
    }
    (status, v)
}

/// Replay a whole script; every step must succeed.
pub async fn replay(app: &Router, script: &Script) -> String {
    let mut session = None;
    for (i, s) in script.steps.iter().enumerate() {
        let (status, v) = step(app, &mut session, s).await;
        assert!(status.is_success(), "step {} {s:?}: {status} {v}", i + 1);
    }
    session.unwrap()
}
