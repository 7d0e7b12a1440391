use serde::{Deserialize, Serialize};

use super::{Alert, QosReport};
use crate::sim::Metric;

/// Raise step applied to the guaranteed rate on throughput alerts.
pub const GBR_RAISE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationKind {
    RelocateService,
    AdjustPolicy,
    AdjustExpectations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub kind: RecommendationKind,
    pub detail: String,
    pub triggering_alerts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_node_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_gbr_ul_mbps: Option<f64>,
}

/// A node the running model could be moved to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOption {
    pub node_id: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyView {
    pub policy_id: String,
    pub gbr_ul_mbps: f64,
    #[serde(default)]
    pub mbr_ul_mbps: Option<f64>,
}

/// What the session currently has in place.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Situation {
    #[serde(default)]
    pub service_node_id: Option<String>,
    #[serde(default)]
    pub service_latency_ms: Option<f64>,
    /// Nodes with room for the model, excluding the current one.
    #[serde(default)]
    pub alternatives: Vec<NodeOption>,
    #[serde(default)]
    pub policy: Option<PolicyView>,
}

fn ids(alerts: &[&Alert]) -> Vec<String> {
    alerts.iter().map(|a| a.alert_id.clone()).collect()
}

/// Rule-based suggestions for the active alerts. Reports only contribute
/// context to the explanation text.
pub fn recommend(alerts: &[Alert], reports: &[QosReport], situation: &Situation) -> Vec<Recommendation> {
    let active: Vec<&Alert> = alerts.iter().filter(|a| !a.cleared).collect();
    if active.is_empty() {
        return Vec::new();
    }
    let latency: Vec<&Alert> = active.iter().copied().filter(|a| a.metric == Metric::LatencyMs).collect();
    let throughput: Vec<&Alert> = active
        .iter()
        .copied()
        .filter(|a| a.metric == Metric::ThroughputMbps)
        .collect();
    let mut out = Vec::new();
    let mut unresolved: Vec<&Alert> = active
        .iter()
        .copied()
        .filter(|a| a.metric != Metric::LatencyMs && a.metric != Metric::ThroughputMbps)
        .collect();

    if !latency.is_empty() {
        let current = situation.service_latency_ms.unwrap_or(f64::INFINITY);
        let best = situation
            .alternatives
            .iter()
            .filter(|n| n.latency_ms < current)
            .min_by(|a, b| a.latency_ms.total_cmp(&b.latency_ms).then_with(|| a.node_id.cmp(&b.node_id)));
        match best {
            Some(n) => out.push(Recommendation {
                kind: RecommendationKind::RelocateService,
                detail: format!(
                    "move the service to {} ({} ms attach latency instead of {} ms)",
                    n.node_id, n.latency_ms, current
                ),
                triggering_alerts: ids(&latency),
                target_node_id: Some(n.node_id.clone()),
                new_gbr_ul_mbps: None,
            }),
            None => unresolved.extend(latency.iter().copied()),
        }
    }

    if !throughput.is_empty() {
        let raise = situation.policy.as_ref().and_then(|p| {
            let cap = p.mbr_ul_mbps.unwrap_or(f64::INFINITY);
            let next = (p.gbr_ul_mbps * GBR_RAISE).min(cap);
            (next > p.gbr_ul_mbps).then_some((p, next))
        });
        match raise {
            Some((p, next)) => out.push(Recommendation {
                kind: RecommendationKind::AdjustPolicy,
                detail: format!(
                    "raise the guaranteed uplink of {} from {} to {} Mbps",
                    p.policy_id, p.gbr_ul_mbps, next
                ),
                triggering_alerts: ids(&throughput),
                target_node_id: None,
                new_gbr_ul_mbps: Some(next),
            }),
            None => unresolved.extend(throughput.iter().copied()),
        }
    }

    if !unresolved.is_empty() {
        let metrics: Vec<&str> = {
            let mut m: Vec<&str> = unresolved.iter().map(|a| a.metric.name()).collect();
            m.sort();
            m.dedup();
            m
        };
        let observed = reports
            .last()
            .map(|r| {
                metrics
                    .iter()
                    .filter_map(|name| {
                        r.metrics
                            .iter()
                            .find(|(m, _)| m.name() == *name)
                            .map(|(_, s)| format!("{name} mean {:.3}", s.mean))
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .unwrap_or_default();
        let mut detail = format!(
            "no placement or policy change is left for {}; relax the requirement or reduce the load",
            metrics.join(", ")
        );
        if !observed.is_empty() {
            detail.push_str(&format!(" (last report: {observed})"));
        }
        out.push(Recommendation {
            kind: RecommendationKind::AdjustExpectations,
            detail,
            triggering_alerts: ids(&unresolved),
            target_node_id: None,
            new_gbr_ul_mbps: None,
        });
    }
    out
}
