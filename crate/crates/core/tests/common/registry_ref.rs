//! Reference filter over the model fixture files, read without the registry.

use std::collections::BTreeMap;

use edgeai_core::edge::{EdgeNode, Tier};
use edgeai_core::registry::{filter_and_rank, FixtureBackend, ModelRegistry, Placement, RegistryError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub const TOP: usize = 10;

pub struct RefCard {
    id: String,
    tags: Vec<String>,
    downloads: u64,
    likes: u64,
    size_mb: f64,
    cpu: u32,
    mem: u64,
    gpu: u32,
    readme: Option<String>,
}

pub fn reference_cards() -> Vec<RefCard> {
    let dir = super::fixtures().join("models");
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir.join("cards")).unwrap() {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(e.unwrap().path()).unwrap()).unwrap();
        let id = v["model_id"].as_str().unwrap().to_string();
        let readme = std::fs::read_to_string(dir.join("readmes").join(format!("{}.md", id.replace('/', "__")))).ok();
        out.push(RefCard {
            tags: v["task_tags"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| t.as_str().unwrap().to_lowercase().replace('-', "_"))
                .collect(),
            downloads: v["downloads"].as_u64().unwrap_or(0),
            likes: v["likes"].as_u64().unwrap_or(0),
            size_mb: v["size_mb"].as_f64().unwrap_or(0.0),
            cpu: v["min_cpu"].as_u64().unwrap_or(1) as u32,
            mem: v["min_mem_mb"].as_u64().unwrap_or(512),
            gpu: u32::from(v["gpu_required"].as_bool().unwrap_or(false)),
            id,
            readme,
        });
    }
    out
}

fn mentions_usage(readme: &str) -> bool {
    readme
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .any(|w| ["usage", "inference", "pipeline", "api"].contains(&w.to_ascii_lowercase().as_str()))
}

pub fn reference_filter(cards: &[RefCard], task: &str, ceiling: f64, nodes: &[EdgeNode], cells: &[String], bound: Option<f64>) -> Vec<String> {
    let mut hits: Vec<&RefCard> = cards.iter().filter(|c| c.tags.iter().any(|t| t == task)).collect();
    hits.sort_by(|a, b| (b.downloads, b.likes, &a.id).cmp(&(a.downloads, a.likes, &b.id)));
    hits.truncate(TOP);
    hits.into_iter()
        .filter(|c| c.readme.as_deref().is_some_and(mentions_usage) && c.size_mb <= ceiling)
        .filter(|c| {
            nodes.iter().any(|n| {
                let fits = n.cpu_cores - n.allocated_cpu >= c.cpu
                    && n.mem_mb - n.allocated_mem_mb >= c.mem
                    && n.gpu_units - n.allocated_gpu >= c.gpu;
                let lat: Option<Vec<f64>> = cells.iter().map(|x| n.attach_latency_ms.get(x).copied()).collect();
                let near = match (lat, bound) {
                    _ if cells.is_empty() => true,
                    (None, _) => false,
                    (Some(_), None) => true,
                    (Some(l), Some(b)) => l.iter().all(|x| *x <= b),
                };
                fits && near
            })
        })
        .map(|c| c.id.clone())
        .collect()
}

fn random_nodes(rng: &mut ChaCha8Rng) -> Vec<EdgeNode> {
    (0..rng.random_range(1..=3))
        .map(|i| {
            let cpu = rng.random_range(1..=8);
            let mem = [1024u64, 2048, 4096, 8192, 16384][rng.random_range(0..5)];
            let gpu = rng.random_range(0..=1);
            let mut attach = BTreeMap::new();
            for cell in ["cell-1", "cell-2"] {
                if rng.random_bool(0.7) {
                    attach.insert(cell.to_string(), [2.0, 8.0, 25.0][rng.random_range(0..3)]);
                }
            }
            EdgeNode {
                node_id: format!("n{i}"),
                tier: Tier::CellSite,
                cpu_cores: cpu,
                mem_mb: mem,
                gpu_units: gpu,
                allocated_cpu: rng.random_range(0..=cpu),
                allocated_mem_mb: 0,
                allocated_gpu: 0,
                attach_latency_ms: attach,
            }
        })
        .collect()
}

pub fn pipeline(reg: &ModelRegistry, task: &str, placement: &Placement, nodes: &[EdgeNode]) -> Result<Vec<String>, RegistryError> {
    let mut cards = reg.search_models(task, TOP)?;
    if cards.len() > TOP {
        return Err(RegistryError::Fixture(format!("search returned {} cards", cards.len())));
    }
    for c in &mut cards {
        let readme = reg.fetch_readme(&c.model_id).unwrap_or_default();
        reg.assess(c, &readme);
    }
    Ok(filter_and_rank(&cards, placement, nodes)?.into_iter().map(|c| c.model_id).collect())
}

pub const TASKS: [&str; 6] = [
    "object_detection",
    "image_classification",
    "image_segmentation",
    "automatic_speech_recognition",
    "text_classification",
    "time_series_forecasting",
];

/// Randomized profile/node combinations; returns how many kept a model.
pub fn filter_trials(trials: usize, seed: u64) -> Result<usize, String> {
    let cards = reference_cards();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonempty = 0;
    for trial in 0..trials {
        let task = TASKS[rng.random_range(0..TASKS.len())];
        let ceiling = [50.0, 200.0, 500.0, 2048.0][rng.random_range(0..4)];
        let nodes = random_nodes(&mut rng);
        let cells: Vec<String> = match rng.random_range(0..3) {
            0 => vec![],
            1 => vec!["cell-1".into()],
            _ => vec!["cell-1".into(), "cell-2".into()],
        };
        let bound = [None, Some(5.0), Some(10.0), Some(50.0)][rng.random_range(0..4)];
        let placement = Placement { cell_ids: cells.clone(), max_latency_ms: bound };

        let reg = ModelRegistry::new(Box::new(FixtureBackend::load(super::fixtures().join("models")).unwrap()))
            .with_size_ceiling(ceiling);
        let want = reference_filter(&cards, task, ceiling, &nodes, &cells, bound);
        match pipeline(&reg, task, &placement, &nodes) {
            Ok(got) if got.len() > TOP => return Err(format!("trial {trial}: {} kept", got.len())),
            Ok(got) if got != want => {
                return Err(format!("trial {trial}: task {task}, ceiling {ceiling}, placement {placement:?}: got {got:?}, want {want:?}"))
            }
            Ok(_) => nonempty += 1,
            Err(RegistryError::NoCandidates) if want.is_empty() => {}
            Err(RegistryError::NoCandidates) => return Err(format!("trial {trial}: no candidates, expected {want:?}")),
            Err(e) => return Err(format!("trial {trial}: {e}")),
        }
    }
    Ok(nonempty)
}
