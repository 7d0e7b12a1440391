//! Scenario files.
//!
//! A scenario is a single JSON document describing the radio side (cells,
//! slices, UEs, flows), the edge side (nodes and their attachment links) and
//! a handful of tunables for the simulator, RIC, edge manager and model
//! registry. Field names match the domain types one to one, so a `Cell` in a
//! scenario file deserializes straight into [`crate::sim::Cell`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edge::EdgeNode;
use crate::sim::{Cell, Flow, Link, Ue};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A scheduled change to a flow's offered load, applied to ticks starting at
/// or after `t_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadChange {
    pub t_ms: u64,
    pub flow_id: String,
    pub offered_mbps: f64,
}

/// Number of in-flight inference requests seen by edge services from `t_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceLoad {
    pub t_ms: u64,
    pub concurrent_requests: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "SimSettings::default_history_ms")]
    pub history_ms: u64,
}

impl SimSettings {
    fn default_history_ms() -> u64 {
        60_000
    }
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            history_ms: Self::default_history_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RicSettings {
    #[serde(default = "RicSettings::default_delay")]
    pub control_delay_ticks: u32,
}

impl RicSettings {
    fn default_delay() -> u32 {
        2
    }
}

impl Default for RicSettings {
    fn default() -> Self {
        Self {
            control_delay_ticks: Self::default_delay(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSettings {
    #[serde(default = "EdgeSettings::default_load_factor")]
    pub load_factor: f64,
    #[serde(default = "EdgeSettings::default_deploy_ticks")]
    pub deploy_ticks: u32,
    #[serde(default = "EdgeSettings::default_port_base")]
    pub port_base: u16,
    #[serde(default = "EdgeSettings::default_port_count")]
    pub port_count: u16,
    #[serde(default = "EdgeSettings::default_inference_ms")]
    pub default_inference_ms: f64,
    /// Directory that receives generated service descriptors. Relative paths
    /// resolve against the scenario file.
    #[serde(default)]
    pub descriptor_dir: Option<PathBuf>,
}

impl EdgeSettings {
    fn default_load_factor() -> f64 {
        0.25
    }
    fn default_deploy_ticks() -> u32 {
        2
    }
    fn default_port_base() -> u16 {
        8000
    }
    fn default_port_count() -> u16 {
        100
    }
    fn default_inference_ms() -> f64 {
        40.0
    }
}

impl Default for EdgeSettings {
    fn default() -> Self {
        Self {
            load_factor: Self::default_load_factor(),
            deploy_ticks: Self::default_deploy_ticks(),
            port_base: Self::default_port_base(),
            port_count: Self::default_port_count(),
            default_inference_ms: Self::default_inference_ms(),
            descriptor_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegistryBackendKind {
    #[default]
    Fixture,
    Hub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrySettings {
    #[serde(default)]
    pub backend: RegistryBackendKind,
    /// Fixture registry directory (relative to the scenario file).
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "RegistrySettings::default_hub_url")]
    pub hub_url: String,
    #[serde(default = "RegistrySettings::default_ceiling")]
    pub size_ceiling_mb: f64,
}

impl RegistrySettings {
    fn default_hub_url() -> String {
        "https://huggingface.co".to_string()
    }
    fn default_ceiling() -> f64 {
        2048.0
    }
}

impl Default for RegistrySettings {
    fn default() -> Self {
        Self {
            backend: RegistryBackendKind::Fixture,
            fixture_dir: None,
            hub_url: Self::default_hub_url(),
            size_ceiling_mb: Self::default_ceiling(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSettings {
    #[serde(default = "MonitorSettings::default_report_period")]
    pub report_period_ms: u64,
}

impl MonitorSettings {
    fn default_report_period() -> u64 {
        1000
    }
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            report_period_ms: Self::default_report_period(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub ues: Vec<Ue>,
    #[serde(default)]
    pub links: Vec<Link>,
    #[serde(default)]
    pub flows: Vec<Flow>,
    #[serde(default)]
    pub edge_nodes: Vec<EdgeNode>,
    #[serde(default)]
    pub load_schedule: Vec<LoadChange>,
    #[serde(default)]
    pub inference_load: Vec<InferenceLoad>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub ric: RicSettings,
    #[serde(default)]
    pub edge: EdgeSettings,
    #[serde(default)]
    pub registry: RegistrySettings,
    #[serde(default)]
    pub monitor: MonitorSettings,
    /// Directory the file was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
