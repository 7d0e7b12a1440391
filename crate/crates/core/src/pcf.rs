//! Core-network policy control.
//!
//! A small PCF-style policy store. Policies target one or more UEs and may set
//! any subset of slice, GBR/MBR per direction, priority and a steering
//! destination. The effective rules for a UE merge every policy targeting it
//! field by field; the most recently written policy wins on conflict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{Flow, Topology};
use crate::sim::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosPolicy {
    /// Assigned by the store on creation; ignored in requests.
    #[serde(default)]
    pub policy_id: String,
    pub target_ue_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbr_ul_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbr_dl_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbr_ul_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbr_dl_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering_dest_node_id: Option<String>,
}

impl QosPolicy {
    pub fn for_ues(ues: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            policy_id: String::new(),
            target_ue_ids: ues.into_iter().map(Into::into).collect(),
            slice_id: None,
            gbr_ul_mbps: None,
            gbr_dl_mbps: None,
            mbr_ul_mbps: None,
            mbr_dl_mbps: None,
            priority_level: None,
            steering_dest_node_id: None,
        }
    }

    /// Checks the policy's own invariants.
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.target_ue_ids.is_empty() {
            return Err(PolicyError::Validation("target_ue_ids must not be empty".into()));
        }
        for (name, v) in [
            ("gbr_ul_mbps", self.gbr_ul_mbps),
            ("gbr_dl_mbps", self.gbr_dl_mbps),
            ("mbr_ul_mbps", self.mbr_ul_mbps),
            ("mbr_dl_mbps", self.mbr_dl_mbps),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(PolicyError::Validation(format!("{name} must be finite and >= 0")));
                }
            }
        }
        for (dir, gbr, mbr) in [
            ("ul", self.gbr_ul_mbps, self.mbr_ul_mbps),
            ("dl", self.gbr_dl_mbps, self.mbr_dl_mbps),
        ] {
            if let (Some(g), Some(m)) = (gbr, mbr) {
                if g > m {
                    return Err(PolicyError::Validation(format!("gbr_{dir} {g} exceeds mbr_{dir} {m}")));
                }
            }
        }
        if let Some(p) = self.priority_level {
            if !(1..=15).contains(&p) {
                return Err(PolicyError::Validation(format!("priority_level {p} outside 1..=15")));
            }
        }
        Ok(())
    }

    fn same_body(&self, other: &QosPolicy) -> bool {
        let mut a = self.clone();
        a.policy_id.clear();
        let mut b = other.clone();
        b.policy_id.clear();
        a == b
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("policy {0} not found")]
    NotFound(String),
    #[error("unknown ue {0}")]
    UnknownUe(String),
}

/// What the store needs to know about the network to accept a policy.
pub trait TargetDirectory {
    fn has_ue(&self, ue_id: &str) -> bool;
    fn ue_has_slice(&self, ue_id: &str, slice_id: &str) -> bool;
    fn ue_reaches(&self, ue_id: &str, node_id: &str) -> bool;
}

impl TargetDirectory for Topology {
    fn has_ue(&self, ue_id: &str) -> bool {
        self.ue(ue_id).is_some()
    }

    fn ue_has_slice(&self, ue_id: &str, slice_id: &str) -> bool {
        self.cell_of_ue(ue_id).is_some_and(|c| c.slice(slice_id).is_some())
    }

    fn ue_reaches(&self, ue_id: &str, node_id: &str) -> bool {
        self.ue(ue_id)
            .is_some_and(|u| self.link_latency(node_id, &u.cell_id).is_some())
    }
}

/// Merged view of every policy targeting one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRules {
    pub ue_id: String,
    /// Contributing policies, oldest first.
    pub policy_ids: Vec<String>,
    pub slice_id: Option<String>,
    pub gbr_ul_mbps: f64,
    pub gbr_dl_mbps: f64,
    pub mbr_ul_mbps: Option<f64>,
    pub mbr_dl_mbps: Option<f64>,
    pub priority_level: u8,
    pub steering_dest_node_id: Option<String>,
}

impl EffectiveRules {
    pub const DEFAULT_PRIORITY: u8 = 9;

    fn defaults(ue_id: &str) -> Self {
        Self {
            ue_id: ue_id.to_string(),
            policy_ids: Vec::new(),
            slice_id: None,
            gbr_ul_mbps: 0.0,
            gbr_dl_mbps: 0.0,
            mbr_ul_mbps: None,
            mbr_dl_mbps: None,
            priority_level: Self::DEFAULT_PRIORITY,
            steering_dest_node_id: None,
        }
    }

    pub fn gbr(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Uplink => self.gbr_ul_mbps,
            Direction::Downlink => self.gbr_dl_mbps,
        }
    }

    pub fn mbr(&self, dir: Direction) -> Option<f64> {
        match dir {
            Direction::Uplink => self.mbr_ul_mbps,
            Direction::Downlink => self.mbr_dl_mbps,
        }
    }

    /// Apply these rules to a provisioned flow. UEs without any policy keep
    /// their provisioned attributes.
    pub fn apply_to(&self, base: &Flow) -> Flow {
        let mut f = base.clone();
        if self.policy_ids.is_empty() {
            return f;
        }
        if let Some(s) = &self.slice_id {
            f.slice_id = s.clone();
        }
        f.mbr_mbps = self.mbr(f.direction).or(base.mbr_mbps);
        let gbr = self.gbr(f.direction);
        f.gbr_mbps = match f.mbr_mbps {
            Some(m) => gbr.min(m),
            None => gbr,
        };
        f.priority_level = self.priority_level;
        if let Some(n) = &self.steering_dest_node_id {
            f.dest_node_id = n.clone();
        }
        f
    }
}

#[derive(Debug, Clone)]
struct Stored {
    policy: QosPolicy,
    /// Write stamp; larger is newer.
    stamp: u64,
}

#[derive(Debug, Clone, Default)]
pub struct PolicyStore {
    policies: BTreeMap<String, Stored>,
    next_id: u64,
    stamp: u64,
    revision: u64,
}

impl PolicyStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every accepted change bumps the revision.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Full admission check without storing anything.
    pub fn check(&self, p: &QosPolicy, dir: &dyn TargetDirectory) -> Result<(), PolicyError> {
        p.validate()?;
        for ue in &p.target_ue_ids {
            if !dir.has_ue(ue) {
                return Err(PolicyError::UnknownTarget(format!("ue {ue}")));
            }
            if let Some(s) = &p.slice_id {
                if !dir.ue_has_slice(ue, s) {
                    return Err(PolicyError::UnknownTarget(format!("slice {s} not configured for ue {ue}")));
                }
            }
            if let Some(n) = &p.steering_dest_node_id {
                if !dir.ue_reaches(ue, n) {
                    return Err(PolicyError::UnknownTarget(format!("node {n} not reachable from ue {ue}")));
                }
            }
        }
        Ok(())
    }

    pub fn create_policy(&mut self, mut p: QosPolicy, dir: &dyn TargetDirectory) -> Result<QosPolicy, PolicyError> {
        self.check(&p, dir)?;
        self.next_id += 1;
        p.policy_id = format!("pol-{}", self.next_id);
        self.stamp += 1;
        self.revision += 1;
        self.policies.insert(
            p.policy_id.clone(),
            Stored {
                policy: p.clone(),
                stamp: self.stamp,
            },
        );
        Ok(p)
    }

    /// Replace a policy wholesale. An identical body is a no-op.
    pub fn update_policy(&mut self, policy_id: &str, mut p: QosPolicy, dir: &dyn TargetDirectory) -> Result<QosPolicy, PolicyError> {
        let current = self
            .policies
            .get(policy_id)
            .ok_or_else(|| PolicyError::NotFound(policy_id.to_string()))?;
        self.check(&p, dir)?;
        p.policy_id = policy_id.to_string();
        if current.policy.same_body(&p) {
            return Ok(p);
        }
        self.stamp += 1;
        self.revision += 1;
        self.policies.insert(
            policy_id.to_string(),
            Stored {
                policy: p.clone(),
                stamp: self.stamp,
            },
        );
        Ok(p)
    }

    pub fn get(&self, policy_id: &str) -> Result<&QosPolicy, PolicyError> {
        self.policies
            .get(policy_id)
            .map(|s| &s.policy)
            .ok_or_else(|| PolicyError::NotFound(policy_id.to_string()))
    }

    pub fn policies(&self) -> impl Iterator<Item = &QosPolicy> {
        self.policies.values().map(|s| &s.policy)
    }

    pub fn resolve_effective_rules(&self, ue_id: &str, dir: &dyn TargetDirectory) -> Result<EffectiveRules, PolicyError> {
        if !dir.has_ue(ue_id) {
            return Err(PolicyError::UnknownUe(ue_id.to_string()));
        }
        Ok(self.merge_for(ue_id))
    }

    pub(crate) fn merge_for(&self, ue_id: &str) -> EffectiveRules {
        let mut matching: Vec<&Stored> = self
            .policies
            .values()
            .filter(|s| s.policy.target_ue_ids.iter().any(|u| u == ue_id))
            .collect();
        matching.sort_by_key(|s| s.stamp);

        let mut rules = EffectiveRules::defaults(ue_id);
        for s in matching {
            let p = &s.policy;
            rules.policy_ids.push(p.policy_id.clone());
            if let Some(v) = &p.slice_id {
                rules.slice_id = Some(v.clone());
            }
            if let Some(v) = p.gbr_ul_mbps {
                rules.gbr_ul_mbps = v;
            }
            if let Some(v) = p.gbr_dl_mbps {
                rules.gbr_dl_mbps = v;
            }
            if let Some(v) = p.mbr_ul_mbps {
                rules.mbr_ul_mbps = Some(v);
            }
            if let Some(v) = p.mbr_dl_mbps {
                rules.mbr_dl_mbps = Some(v);
            }
            if let Some(v) = p.priority_level {
                rules.priority_level = v;
            }
            if let Some(v) = &p.steering_dest_node_id {
                rules.steering_dest_node_id = Some(v.clone());
            }
        }
        rules
    }
}
