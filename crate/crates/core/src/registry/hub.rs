//! Client for a Hugging Face compatible model hub.
//!
//! `GET {base}/api/models?filter=<tag>&sort=downloads&limit=N` lists models;
//! `GET {base}/{model_id}/raw/main/README.md` returns the README. The listing
//! does not carry resource requirements, so they are estimated from the
//! parameter count when the entry does not state them explicitly.

use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;

use super::{normalize_tag, ModelBackend, ModelCard, RegistryError};

/// Models above this size are assumed to need a GPU.
const GPU_THRESHOLD_MB: f64 = 500.0;

#[derive(Debug, Deserialize)]
struct HubEntry {
    #[serde(alias = "modelId")]
    id: String,
    #[serde(default)]
    downloads: u64,
    #[serde(default)]
    likes: u64,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    pipeline_tag: Option<String>,
    #[serde(default)]
    safetensors: Option<Value>,
    #[serde(default)]
    size_mb: Option<f64>,
    #[serde(default)]
    gpu_required: Option<bool>,
    #[serde(default)]
    min_cpu: Option<u32>,
    #[serde(default)]
    min_mem_mb: Option<u64>,
    #[serde(default)]
    accuracy: Option<f64>,
    #[serde(default)]
    base_inference_ms: Option<f64>,
}

impl HubEntry {
    fn into_card(self) -> ModelCard {
        let mut tags: Vec<String> = Vec::new();
        for t in self.pipeline_tag.iter().chain(self.tags.iter()) {
            let t = normalize_tag(t);
            if !tags.contains(&t) {
                tags.push(t);
            }
        }
        // float32 weights: 4 bytes per parameter
        let params = self
            .safetensors
            .as_ref()
            .and_then(|s| s.get("total"))
            .and_then(Value::as_f64);
        let size_mb = self.size_mb.or(params.map(|p| p * 4.0 / 1e6)).unwrap_or(0.0);
        let mut card = ModelCard::new(&self.id, &[]);
        card.task_tags = tags;
        card.downloads = self.downloads;
        card.likes = self.likes;
        card.size_mb = size_mb;
        card.gpu_required = self.gpu_required.unwrap_or(size_mb > GPU_THRESHOLD_MB);
        card.min_cpu = self.min_cpu.unwrap_or(if size_mb > 200.0 { 2 } else { 1 });
        card.min_mem_mb = self.min_mem_mb.unwrap_or(((2.0 * size_mb).ceil() as u64).max(512));
        card.accuracy = self.accuracy;
        card.base_inference_ms = self.base_inference_ms;
        card
    }
}

#[derive(Debug, Clone)]
pub struct HubBackend {
    base_url: String,
    agent: ureq::Agent,
}

impl HubBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn map_err(e: ureq::Error, what: &str) -> RegistryError {
        match e {
            ureq::Error::StatusCode(404) => RegistryError::NotFound(what.to_string()),
            other => RegistryError::BackendUnavailable(format!("{what}: {other}")),
        }
    }
}

impl ModelBackend for HubBackend {
    fn kind(&self) -> &'static str {
        "hub"
    }

    fn search(&self, task_tag: &str, limit: usize) -> Result<Vec<ModelCard>, RegistryError> {
        let url = format!("{}/api/models", self.base_url);
        let filter = normalize_tag(task_tag).replace('_', "-");
        let limit = limit.to_string();
        let mut resp = self
            .agent
            .get(&url)
            .query("filter", &filter)
            .query("sort", "downloads")
            .query("limit", &limit)
            .call()
            .map_err(|e| Self::map_err(e, &url))?;
        let entries: Vec<HubEntry> = resp
            .body_mut()
            .read_json()
            .map_err(|e| RegistryError::BackendUnavailable(format!("{url}: {e}")))?;
        Ok(entries.into_iter().map(HubEntry::into_card).collect())
    }

    fn readme(&self, model_id: &str) -> Result<String, RegistryError> {
        let url = format!("{}/{}/raw/main/README.md", self.base_url, model_id);
        let mut resp = self.agent.get(&url).call().map_err(|e| Self::map_err(e, model_id))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| RegistryError::BackendUnavailable(format!("{url}: {e}")))
    }
}
