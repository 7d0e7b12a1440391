//! Offline registry loaded from a directory snapshot.
//!
//! ```text
//! <dir>/index.json          {"tasks": ["object_detection", ...]}
//! <dir>/cards/*.json        one ModelCard per file
//! <dir>/readmes/<slug>.md   README for model `org/name`, slug `org__name`
//! ```
//!
//! A model without a README file is listed but `readme` reports NotFound.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{normalize_tag, rank_order, ModelBackend, ModelCard, RegistryError};

#[derive(Debug, Deserialize)]
struct Index {
    #[serde(default)]
    tasks: Vec<String>,
}

pub fn readme_slug(model_id: &str) -> String {
    model_id.replace('/', "__")
}

#[derive(Debug, Clone)]
pub struct FixtureBackend {
    dir: PathBuf,
    cards: Vec<ModelCard>,
    readmes: BTreeMap<String, String>,
    tasks: BTreeSet<String>,
}

impl FixtureBackend {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let dir = dir.as_ref().to_path_buf();
        let err = |what: &str, e: &dyn std::fmt::Display| RegistryError::Fixture(format!("{what}: {e}"));

        let index_path = dir.join("index.json");
        let index: Index = match std::fs::read_to_string(&index_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| err(&index_path.display().to_string(), &e))?,
            Err(_) => Index { tasks: Vec::new() },
        };

        let mut card_files: Vec<PathBuf> = std::fs::read_dir(dir.join("cards"))
            .map_err(|e| err(&dir.join("cards").display().to_string(), &e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        card_files.sort();

        let mut cards = Vec::with_capacity(card_files.len());
        let mut readmes = BTreeMap::new();
        for path in card_files {
            let text = std::fs::read_to_string(&path).map_err(|e| err(&path.display().to_string(), &e))?;
            let card: ModelCard = serde_json::from_str(&text).map_err(|e| err(&path.display().to_string(), &e))?;
            let readme_path = dir.join("readmes").join(format!("{}.md", readme_slug(&card.model_id)));
            if let Ok(text) = std::fs::read_to_string(&readme_path) {
                readmes.insert(card.model_id.clone(), text);
            }
            cards.push(card);
        }

        let mut tasks: BTreeSet<String> = index.tasks.iter().map(|t| normalize_tag(t)).collect();
        for c in &cards {
            tasks.extend(c.task_tags.iter().map(|t| normalize_tag(t)));
        }
        Ok(Self {
            dir,
            cards,
            readmes,
            tasks,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn cards(&self) -> &[ModelCard] {
        &self.cards
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(String::as_str)
    }
}

impl ModelBackend for FixtureBackend {
    fn kind(&self) -> &'static str {
        "fixture"
    }

    fn search(&self, task_tag: &str, limit: usize) -> Result<Vec<ModelCard>, RegistryError> {
        if !self.tasks.contains(&normalize_tag(task_tag)) {
            return Err(RegistryError::UnknownTask(task_tag.to_string()));
        }
        let mut hits: Vec<ModelCard> = self.cards.iter().filter(|c| c.has_tag(task_tag)).cloned().collect();
        hits.sort_by(rank_order);
        hits.truncate(limit);
        Ok(hits)
    }

    fn readme(&self, model_id: &str) -> Result<String, RegistryError> {
        if !self.cards.iter().any(|c| c.model_id == model_id) {
            return Err(RegistryError::NotFound(model_id.to_string()));
        }
        self.readmes
            .get(model_id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("{model_id} (README)")))
    }
}
