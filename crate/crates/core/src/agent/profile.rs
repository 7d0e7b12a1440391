//! Use-case profile and the pattern rules that fill it from free text.
//!
//! The rules live in `data/extraction_rules.json`. Each numeric field has an
//! ordered list of patterns; the first pattern that matches wins and its
//! first capture group is the value.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

const RULES_JSON: &str = include_str!("../../data/extraction_rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileStatus {
    Collecting,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCaseProfile {
    pub description: String,
    pub application_category: Option<String>,
    pub max_latency_ms: Option<f64>,
    pub min_ul_mbps: Option<f64>,
    pub min_dl_mbps: Option<f64>,
    pub device_count: Option<u32>,
    pub device_type: Option<String>,
    pub coverage_cell_ids: Vec<String>,
    /// Simulated time by which the service should be up.
    pub deployment_deadline_ms: Option<u64>,
    pub status: ProfileStatus,
}

/// Fields an `update_profile` call may set. Absent fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub application_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_ul_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_dl_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_cell_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment_deadline_ms: Option<u64>,
}

impl ProfileUpdate {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl UseCaseProfile {
    pub fn new(description: &str) -> Self {
        Self {
            description: description.to_string(),
            application_category: None,
            max_latency_ms: None,
            min_ul_mbps: None,
            min_dl_mbps: None,
            device_count: None,
            device_type: None,
            coverage_cell_ids: Vec::new(),
            deployment_deadline_ms: None,
            status: ProfileStatus::Collecting,
        }
    }

    /// Apply an update. Rejects non-positive numbers and leaves the profile
    /// untouched in that case.
    pub fn merge(&mut self, u: &ProfileUpdate) -> Result<(), String> {
        for (name, v) in [
            ("max_latency_ms", u.max_latency_ms),
            ("min_ul_mbps", u.min_ul_mbps),
            ("min_dl_mbps", u.min_dl_mbps),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if u.device_count == Some(0) {
            return Err("device_count must be positive".into());
        }
        if let Some(c) = &u.application_category {
            self.application_category = Some(crate::registry::normalize_tag(c));
        }
        if u.max_latency_ms.is_some() {
            self.max_latency_ms = u.max_latency_ms;
        }
        if u.min_ul_mbps.is_some() {
            self.min_ul_mbps = u.min_ul_mbps;
        }
        if u.min_dl_mbps.is_some() {
            self.min_dl_mbps = u.min_dl_mbps;
        }
        if u.device_count.is_some() {
            self.device_count = u.device_count;
        }
        if let Some(t) = &u.device_type {
            self.device_type = Some(t.clone());
        }
        if let Some(cells) = &u.coverage_cell_ids {
            for c in cells {
                if !self.coverage_cell_ids.contains(c) {
                    self.coverage_cell_ids.push(c.clone());
                }
            }
        }
        if u.deployment_deadline_ms.is_some() {
            self.deployment_deadline_ms = u.deployment_deadline_ms;
        }
        self.status = if self.missing().is_empty() {
            ProfileStatus::Complete
        } else {
            ProfileStatus::Collecting
        };
        Ok(())
    }

    /// Required fields still unset, in the order they are asked for.
    pub fn missing(&self) -> Vec<String> {
        ExtractionRules::builtin()
            .required_order
            .iter()
            .filter_map(|f| {
                let set = match f.as_str() {
                    "application_category" => self.application_category.is_some(),
                    "max_latency_ms" => self.max_latency_ms.is_some(),
                    "min_ul_mbps" => self.min_ul_mbps.is_some(),
                    "device_count" => self.device_count.is_some(),
                    "coverage_cell_ids" => !self.coverage_cell_ids.is_empty(),
                    _ => true,
                };
                (!set).then(|| f.clone())
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.status == ProfileStatus::Complete
    }
}

#[derive(Debug, Deserialize)]
struct RawRules {
    required_order: Vec<String>,
    numbers: BTreeMap<String, Vec<String>>,
    devices: RawDevices,
    cell_pattern: String,
    categories: Vec<CategoryRule>,
    questions: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct RawDevices {
    pattern: String,
    type_only_pattern: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CategoryRule {
    pub category: String,
    pub keywords: Vec<String>,
}

/// Compiled extraction rules.
#[derive(Debug)]
pub struct ExtractionRules {
    pub required_order: Vec<String>,
    numbers: BTreeMap<String, Vec<Regex>>,
    devices: Regex,
    device_type: Regex,
    cells: Regex,
    pub categories: Vec<CategoryRule>,
    pub questions: BTreeMap<String, String>,
}

impl ExtractionRules {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: RawRules = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let re = |p: &str| Regex::new(p).map_err(|e| format!("{p}: {e}"));
        let mut numbers = BTreeMap::new();
        for (field, pats) in &raw.numbers {
            numbers.insert(field.clone(), pats.iter().map(|p| re(p)).collect::<Result<_, _>>()?);
        }
        Ok(Self {
            required_order: raw.required_order,
            numbers,
            devices: re(&raw.devices.pattern)?,
            device_type: re(&raw.devices.type_only_pattern)?,
            cells: re(&raw.cell_pattern)?,
            categories: raw.categories,
            questions: raw.questions,
        })
    }

    pub fn builtin() -> &'static Self {
        static RULES: OnceLock<ExtractionRules> = OnceLock::new();
        RULES.get_or_init(|| Self::from_json(RULES_JSON).expect("bundled extraction rules are valid"))
    }

    fn number(&self, field: &str, text: &str) -> Option<f64> {
        self.numbers
            .get(field)?
            .iter()
            .find_map(|re| re.captures(text).and_then(|c| c[1].parse().ok()))
    }

    pub fn extract(&self, text: &str) -> ProfileUpdate {
        let lower = text.to_lowercase();
        let mut u = ProfileUpdate {
            max_latency_ms: self.number("max_latency_ms", text),
            min_ul_mbps: self.number("min_ul_mbps", text),
            min_dl_mbps: self.number("min_dl_mbps", text),
            ..Default::default()
        };
        if let Some(c) = self.devices.captures(text) {
            u.device_count = c[1].parse().ok().filter(|n| *n > 0);
            if &c[2].to_lowercase() != "device" {
                u.device_type = Some(c[2].to_lowercase());
            }
        }
        if u.device_type.is_none() {
            u.device_type = self.device_type.captures(text).map(|c| c[1].to_lowercase());
        }
        let mut cells: Vec<String> = Vec::new();
        for m in self.cells.find_iter(text) {
            let id = m.as_str().to_lowercase();
            if !cells.contains(&id) {
                cells.push(id);
            }
        }
        if !cells.is_empty() {
            u.coverage_cell_ids = Some(cells);
        }
        u.application_category = self
            .categories
            .iter()
            .find(|r| r.keywords.iter().any(|k| lower.contains(k.as_str())))
            .map(|r| r.category.clone());
        u
    }

    pub fn question(&self, field: &str) -> String {
        self.questions
            .get(field)
            .cloned()
            .unwrap_or_else(|| format!("Please provide {field}."))
    }
}
