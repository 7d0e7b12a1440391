//! Tool catalog and adaptation rule table, both shipped as data files.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Stage;
use crate::monitor::Predictor;
use crate::sim::Metric;

const CATALOG_JSON: &str = include_str!("../../data/tool_catalog.json");
const ADAPTATION_JSON: &str = include_str!("../../data/adaptation_rules.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub stages: Vec<Stage>,
    pub parameters: Value,
}

impl ToolSpec {
    /// Top-level shape check: arguments are an object carrying every
    /// required key.
    pub fn check_arguments(&self, args: &Value) -> Result<(), String> {
        let obj = args
            .as_object()
            .ok_or_else(|| format!("{} arguments must be a JSON object", self.name))?;
        if let Some(req) = self.parameters.get("required").and_then(Value::as_array) {
            for k in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(k) {
                    return Err(format!("{} is missing argument {k}", self.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCatalog {
    pub network_actions: Vec<String>,
    pub tools: Vec<ToolSpec>,
}

impl ToolCatalog {
    pub fn builtin() -> &'static Self {
        static CAT: OnceLock<ToolCatalog> = OnceLock::new();
        CAT.get_or_init(|| serde_json::from_str(CATALOG_JSON).expect("bundled tool catalog is valid"))
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn allowed(&self, stage: Stage) -> Vec<&ToolSpec> {
        self.tools.iter().filter(|t| t.stages.contains(&stage)).collect()
    }

    pub fn is_network_action(&self, name: &str) -> bool {
        self.network_actions.iter().any(|a| a == name)
    }

    /// The tool, if it exists and may run in `stage`.
    pub fn permit(&self, stage: Stage, name: &str) -> Result<&ToolSpec, String> {
        let spec = self
            .get(name)
            .ok_or_else(|| format!("{name} is not in the tool catalog"))?;
        if !spec.stages.contains(&stage) {
            return Err(format!("{name} is not permitted in stage {}", stage.name()));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityRule {
    pub latency_at_most_ms: f64,
    pub priority_if_met: u8,
    pub priority_otherwise: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RanControlRule {
    pub utilization_above: f64,
    pub scheduling_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRule {
    pub period_ms: u64,
    pub consecutive_k: u32,
    pub metrics: Vec<Metric>,
    pub predictor: Predictor,
    pub track_inference: bool,
}

/// Rule table the scripted planner applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRules {
    pub search_limit: usize,
    pub priority: PriorityRule,
    pub slice_id: String,
    pub mbr_over_gbr: f64,
    pub steer_to_service_node: bool,
    pub ran_control: RanControlRule,
    pub monitor: MonitorRule,
}

impl AdaptationRules {
    pub fn builtin() -> &'static Self {
        static RULES: OnceLock<AdaptationRules> = OnceLock::new();
        RULES.get_or_init(|| serde_json::from_str(ADAPTATION_JSON).expect("bundled adaptation rules are valid"))
    }

    pub fn priority_for(&self, max_latency_ms: f64) -> u8 {
        if max_latency_ms <= self.priority.latency_at_most_ms {
            self.priority.priority_if_met
        } else {
            self.priority.priority_otherwise
        }
    }
}
