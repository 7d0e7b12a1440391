#![allow(dead_code)]

pub mod oracle;
pub mod stub_server;
pub mod sweep;
pub mod monitor_ref;
pub mod registry_ref;

use std::path::PathBuf;

use edgeai_core::agent::{Orchestrator, Planner, ScriptedPlanner};
use edgeai_core::runner::Script;
use edgeai_core::scenario::ScenarioConfig;
use edgeai_core::world::World;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn drone_cfg() -> ScenarioConfig {
    ScenarioConfig::load(fixtures().join("scenarios/drone.json")).unwrap()
}

pub fn drone_script() -> Script {
    Script::load(fixtures().join("scenarios/drone_script.json")).unwrap()
}

pub fn orchestrator_with(cfg: &ScenarioConfig, planner: Box<dyn Planner>) -> Orchestrator {
    Orchestrator::new(World::from_scenario(cfg, 1).unwrap(), planner)
}

pub fn drone_orchestrator() -> Orchestrator {
    orchestrator_with(&drone_cfg(), Box::new(ScriptedPlanner))
}

pub const DESCRIBE: &str =
    "I want to deploy an AI service for drones that search for people with an onboard camera in a disaster area";
pub const REQUIREMENTS: &str = "latency under 50 ms, 4 drones, cell-1, 5 Mbps uplink each";
