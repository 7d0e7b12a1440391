//! Model discovery.
//!
//! Search a model hub (or an offline fixture snapshot of one) by task tag,
//! fetch READMEs, decide whether each model can be served at the edge, and
//! keep the ones that fit somewhere in the current edge infrastructure.

mod fixture;
mod hub;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::edge::{EdgeNode, Resources};

pub use fixture::{readme_slug, FixtureBackend};
pub use hub::HubBackend;

pub const DEFAULT_SIZE_CEILING_MB: f64 = 2048.0;
pub const REASON_NO_USAGE: &str = "no-usage-section";
pub const REASON_TOO_LARGE: &str = "exceeds-size-ceiling";
/// Readme keywords that indicate the model documents how to run it.
pub const USAGE_KEYWORDS: [&str; 4] = ["usage", "inference", "pipeline", "api"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_id: String,
    pub task_tags: Vec<String>,
    #[serde(default)]
    pub downloads: u64,
    #[serde(default)]
    pub likes: u64,
    #[serde(default)]
    pub size_mb: f64,
    #[serde(default)]
    pub readme_text: String,
    #[serde(default)]
    pub gpu_required: bool,
    #[serde(default = "ModelCard::default_min_cpu")]
    pub min_cpu: u32,
    #[serde(default = "ModelCard::default_min_mem")]
    pub min_mem_mb: u64,
    #[serde(default)]
    pub servable: bool,
    #[serde(default)]
    pub servability_reasons: Vec<String>,
    /// Set once `servable` has been computed.
    #[serde(default)]
    pub assessed: bool,
    /// Carried through when the hub reports it; never used for ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_inference_ms: Option<f64>,
}

impl ModelCard {
    fn default_min_cpu() -> u32 {
        1
    }
    fn default_min_mem() -> u64 {
        512
    }

    pub fn new(model_id: &str, tags: &[&str]) -> Self {
        Self {
            model_id: model_id.to_string(),
            task_tags: tags.iter().map(|t| t.to_string()).collect(),
            downloads: 0,
            likes: 0,
            size_mb: 0.0,
            readme_text: String::new(),
            gpu_required: false,
            min_cpu: Self::default_min_cpu(),
            min_mem_mb: Self::default_min_mem(),
            servable: false,
            servability_reasons: Vec::new(),
            assessed: false,
            accuracy: None,
            base_inference_ms: None,
        }
    }

    pub fn required_resources(&self) -> Resources {
        Resources {
            cpu: self.min_cpu,
            mem_mb: self.min_mem_mb,
            gpu: u32::from(self.gpu_required),
        }
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        let tag = normalize_tag(tag);
        self.task_tags.iter().any(|t| normalize_tag(t) == tag)
    }
}

/// Hub tags use hyphens (`object-detection`); ours use underscores.
pub fn normalize_tag(tag: &str) -> String {
    tag.trim().to_ascii_lowercase().replace('-', "_")
}

/// Search ordering: downloads desc, likes desc, then model id.
pub fn rank_order(a: &ModelCard, b: &ModelCard) -> std::cmp::Ordering {
    b.downloads
        .cmp(&a.downloads)
        .then_with(|| b.likes.cmp(&a.likes))
        .then_with(|| a.model_id.cmp(&b.model_id))
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown task tag {0}")]
    UnknownTask(String),
    #[error("model {0} not found")]
    NotFound(String),
    #[error("limit must be at least 1")]
    BadLimit,
    #[error("model {0} has not been assessed for servability")]
    NotAssessed(String),
    #[error("no candidate model is servable and deployable on the current edge nodes")]
    NoCandidates,
    #[error("fixture registry: {0}")]
    Fixture(String),
}

pub trait ModelBackend: Send + Sync {
    fn kind(&self) -> &'static str;
    /// Cards tagged with `task_tag`; at most `limit`, best first.
    fn search(&self, task_tag: &str, limit: usize) -> Result<Vec<ModelCard>, RegistryError>;
    fn readme(&self, model_id: &str) -> Result<String, RegistryError>;
}

fn usage_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alternation = USAGE_KEYWORDS.join("|");
        Regex::new(&format!(r"(?i)\b({alternation})\b")).expect("static pattern")
    })
}

/// Keyword and size rules; `reasons` lists every rule that failed.
pub fn assess_servability(card: &ModelCard, readme: &str, size_ceiling_mb: f64) -> (bool, Vec<String>) {
    let mut reasons = Vec::new();
    if !usage_pattern().is_match(readme) {
        reasons.push(REASON_NO_USAGE.to_string());
    }
    if card.size_mb > size_ceiling_mb {
        reasons.push(REASON_TOO_LARGE.to_string());
    }
    (reasons.is_empty(), reasons)
}

/// Where the service will have to run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    #[serde(default)]
    pub cell_ids: Vec<String>,
    #[serde(default)]
    pub max_latency_ms: Option<f64>,
}

pub fn deployable_on(card: &ModelCard, node: &EdgeNode, placement: &Placement) -> bool {
    if !node.fits(&card.required_resources()) {
        return false;
    }
    if placement.cell_ids.is_empty() {
        return true;
    }
    match (node.latency_to(&placement.cell_ids), placement.max_latency_ms) {
        (Some(l), Some(bound)) => l <= bound,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// Keep servable cards deployable on at least one node, in input order.
pub fn filter_and_rank(cards: &[ModelCard], placement: &Placement, nodes: &[EdgeNode]) -> Result<Vec<ModelCard>, RegistryError> {
    if let Some(c) = cards.iter().find(|c| !c.assessed) {
        return Err(RegistryError::NotAssessed(c.model_id.clone()));
    }
    let kept: Vec<ModelCard> = cards
        .iter()
        .filter(|c| c.servable && nodes.iter().any(|n| deployable_on(c, n, placement)))
        .cloned()
        .collect();
    if kept.is_empty() {
        Err(RegistryError::NoCandidates)
    } else {
        Ok(kept)
    }
}

/// A backend plus the per-session README cache.
pub struct ModelRegistry {
    backend: Box<dyn ModelBackend>,
    cache: Mutex<BTreeMap<String, String>>,
    backend_calls: AtomicU64,
    size_ceiling_mb: f64,
    politeness: Duration,
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("backend", &self.backend.kind())
            .field("backend_calls", &self.backend_calls())
            .finish()
    }
}

impl ModelRegistry {
    pub const MAX_CONCURRENT_FETCHES: usize = 4;

    pub fn new(backend: Box<dyn ModelBackend>) -> Self {
        let politeness = if backend.kind() == "hub" {
            Duration::from_millis(100)
        } else {
            Duration::ZERO
        };
        Self {
            backend,
            cache: Mutex::new(BTreeMap::new()),
            backend_calls: AtomicU64::new(0),
            size_ceiling_mb: DEFAULT_SIZE_CEILING_MB,
            politeness,
        }
    }

    pub fn with_size_ceiling(mut self, mb: f64) -> Self {
        self.size_ceiling_mb = mb;
        self
    }

    pub fn with_politeness(mut self, delay: Duration) -> Self {
        self.politeness = delay;
        self
    }

    pub fn backend_kind(&self) -> &'static str {
        self.backend.kind()
    }

    pub fn size_ceiling_mb(&self) -> f64 {
        self.size_ceiling_mb
    }

    /// README fetches that reached the backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn search_models(&self, task_tag: &str, limit: usize) -> Result<Vec<ModelCard>, RegistryError> {
        if limit == 0 {
            return Err(RegistryError::BadLimit);
        }
        let mut cards: Vec<ModelCard> = self
            .backend
            .search(task_tag, limit)?
            .into_iter()
            .filter(|c| c.has_tag(task_tag))
            .collect();
        cards.sort_by(rank_order);
        cards.truncate(limit);
        Ok(cards)
    }

    pub fn fetch_readme(&self, model_id: &str) -> Result<String, RegistryError> {
        if let Some(text) = self.cache.lock().expect("cache poisoned").get(model_id) {
            return Ok(text.clone());
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.backend.readme(model_id)?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(model_id.to_string(), text.clone());
        Ok(text)
    }

    /// Fetch several READMEs with at most four requests in flight, each
    /// worker pausing between requests.
    pub fn fetch_readmes(&self, ids: &[String]) -> Vec<Result<String, RegistryError>> {
        let mut out: Vec<Option<Result<String, RegistryError>>> = vec![None; ids.len()];
        let next = AtomicU64::new(0);
        let results = Mutex::new(&mut out);
        std::thread::scope(|scope| {
            for _ in 0..Self::MAX_CONCURRENT_FETCHES.min(ids.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed) as usize;
                    let Some(id) = ids.get(i) else { break };
                    let r = self.fetch_readme(id);
                    results.lock().expect("results poisoned")[i] = Some(r);
                    if !self.politeness.is_zero() {
                        std::thread::sleep(self.politeness);
                    }
                });
            }
        });
        out.into_iter()
            .map(|r| r.expect("every index visited"))
            .collect()
    }

    /// Fill in servability for `card` from its README.
    pub fn assess(&self, card: &mut ModelCard, readme: &str) {
        let (ok, reasons) = assess_servability(card, readme, self.size_ceiling_mb);
        card.readme_text = readme.to_string();
        card.servable = ok;
        card.servability_reasons = reasons;
        card.assessed = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::Tier;

    #[test]
    fn servability_rules() {
        let mut c = ModelCard::new("m", &["object_detection"]);
        c.size_mb = 120.0;
        assert_eq!(assess_servability(&c, "## Usage\nrun it", 2048.0), (true, vec![]));
        assert_eq!(
            assess_servability(&c, "A detector trained on COCO.", 2048.0),
            (false, vec![REASON_NO_USAGE.to_string()])
        );
        c.size_mb = 4096.0;
        assert_eq!(
            assess_servability(&c, "see the API docs", 2048.0),
            (false, vec![REASON_TOO_LARGE.to_string()])
        );
        // keyword must be a whole word
        c.size_mb = 10.0;
        assert!(!assess_servability(&c, "rapid capital", 2048.0).0);
        assert!(assess_servability(&c, "Run INFERENCE with", 2048.0).0);
    }

    fn node(id: &str, gpu: u32) -> EdgeNode {
        EdgeNode {
            node_id: id.into(),
            tier: Tier::Regional,
            cpu_cores: 8,
            mem_mb: 16_384,
            gpu_units: gpu,
            allocated_cpu: 0,
            allocated_mem_mb: 0,
            allocated_gpu: 0,
            attach_latency_ms: [("cell-1".to_string(), 8.0)].into(),
        }
    }

    fn assessed(id: &str, gpu: bool) -> ModelCard {
        let mut c = ModelCard::new(id, &["object_detection"]);
        c.gpu_required = gpu;
        c.servable = true;
        c.assessed = true;
        c
    }

    #[test]
    fn filter_identity_and_gpu() {
        let cards: Vec<ModelCard> = (0..10).map(|i| assessed(&format!("m{i}"), i % 4 == 1)).collect();
        let all = filter_and_rank(&cards, &Placement::default(), &[node("g", 1)]).unwrap();
        assert_eq!(all, cards);
        let cpu_only = filter_and_rank(&cards, &Placement::default(), &[node("c", 0)]).unwrap();
        assert_eq!(cpu_only.len(), 10 - 3);
        assert!(cpu_only.iter().all(|c| !c.gpu_required));
    }

    #[test]
    fn filter_errors() {
        let mut cards = vec![assessed("a", false)];
        cards[0].servable = false;
        assert_eq!(
            filter_and_rank(&cards, &Placement::default(), &[node("n", 0)]),
            Err(RegistryError::NoCandidates)
        );
        let raw = vec![ModelCard::new("b", &["x"])];
        assert!(matches!(
            filter_and_rank(&raw, &Placement::default(), &[]),
            Err(RegistryError::NotAssessed(_))
        ));
    }

    #[test]
    fn placement_latency() {
        let c = assessed("a", false);
        let n = node("n", 0);
        let near = Placement {
            cell_ids: vec!["cell-1".into()],
            max_latency_ms: Some(10.0),
        };
        let far = Placement {
            cell_ids: vec!["cell-1".into()],
            max_latency_ms: Some(5.0),
        };
        let elsewhere = Placement {
            cell_ids: vec!["cell-9".into()],
            max_latency_ms: None,
        };
        assert!(deployable_on(&c, &n, &near));
        assert!(!deployable_on(&c, &n, &far));
        assert!(!deployable_on(&c, &n, &elsewhere));
    }

    #[test]
    fn tags_normalize() {
        let c = ModelCard::new("m", &["object-detection"]);
        assert!(c.has_tag("object_detection"));
        assert!(c.has_tag("Object-Detection"));
    }
}
