//! QoS analytics run inside monitoring xApps.
//!
//! An [`XAppMonitor`] consumes indications (per-flow samples averaged over one
//! reporting period) and keeps alert state for its spec's thresholds:
//!
//! * `observed_breach` after `consecutive_k` breaching indications in a row,
//! * `predicted_breach` when a Holt forecast within the horizon breaches while
//!   the current observation does not,
//! * `anomaly` when the latest one-step residual is a 3-sigma outlier,
//! * `availability_loss` as soon as any selected flow is unavailable.
//!
//! Every kind clears after `consecutive_k` clean indications (one for
//! availability). Per indication, a threshold looks at the worst flow: the
//! maximum for `gt`/`ge` comparators, the minimum for `lt`/`le`.

mod forecast;
mod recommend;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ric::Selector;
use crate::sim::{Metric, MetricSample, SimTime, TICK_MS};

pub use forecast::{
    detect_anomaly, holt_forecast, holt_state, one_step_residuals, residual_test, HoltState, ResidualTest,
    ANOMALY_SIGMAS, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_HORIZON, DEFAULT_RESIDUAL_WINDOW,
};
pub use recommend::{recommend, NodeOption, PolicyView, Recommendation, RecommendationKind, Situation};

/// Indications kept per xApp for reports.
const HISTORY_LIMIT: usize = 20_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("series too short: need {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("no indications in the requested window")]
    NoData,
    #[error("invalid xApp spec: {0}")]
    SpecInvalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparator {
    pub fn breaches(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
        }
    }

    /// Worst value across flows from this comparator's point of view.
    pub fn worst(self, values: impl Iterator<Item = f64>) -> Option<f64> {
        match self {
            Comparator::Gt | Comparator::Ge => values.reduce(f64::max),
            Comparator::Lt | Comparator::Le => values.reduce(f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub metric: Metric,
    pub comparator: Comparator,
    pub value: f64,
    #[serde(default = "default_k")]
    pub consecutive_k: u32,
}

fn default_k() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMethod {
    Holt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    #[serde(default = "default_method")]
    pub method: PredictorMethod,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_horizon")]
    pub horizon_steps: usize,
}

fn default_method() -> PredictorMethod {
    PredictorMethod::Holt
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

impl Default for Predictor {
    fn default() -> Self {
        Self {
            method: PredictorMethod::Holt,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            horizon_steps: DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XAppSpec {
    pub metrics: Vec<Metric>,
    pub selector: Selector,
    pub period_ms: SimTime,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
    #[serde(default)]
    pub predictor: Option<Predictor>,
    #[serde(default)]
    pub track_inference: bool,
    /// Service whose inference delay is tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
}

impl XAppSpec {
    pub fn validate(&self) -> Result<(), MonitorError> {
        let bad = |m: String| Err(MonitorError::SpecInvalid(m));
        if self.metrics.is_empty() {
            return bad("metrics must not be empty".into());
        }
        if self.period_ms < TICK_MS || self.period_ms % TICK_MS != 0 {
            return bad(format!("period {} ms is not a positive multiple of the tick", self.period_ms));
        }
        if self.thresholds.is_empty() && self.predictor.is_none() {
            return bad("spec needs at least one threshold or a predictor".into());
        }
        for t in &self.thresholds {
            if t.consecutive_k == 0 {
                return bad(format!("consecutive_k for {} must be at least 1", t.metric.name()));
            }
            if !t.value.is_finite() {
                return bad(format!("threshold for {} is not finite", t.metric.name()));
            }
            if !self.metrics.contains(&t.metric) {
                return bad(format!("threshold metric {} is not subscribed", t.metric.name()));
            }
        }
        if let Some(p) = &self.predictor {
            let open_unit = |x: f64| x > 0.0 && x < 1.0;
            if !open_unit(p.alpha) || !open_unit(p.beta) {
                return bad("predictor alpha and beta must lie in (0, 1)".into());
            }
            if p.horizon_steps == 0 {
                return bad("predictor horizon must be at least 1".into());
            }
        }
        if self.track_inference && self.instance_id.is_none() {
            return bad("track_inference needs an instance_id".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    ObservedBreach,
    PredictedBreach,
    Anomaly,
    AvailabilityLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub xapp_id: String,
    pub metric: Metric,
    pub kind: AlertKind,
    pub value: f64,
    pub threshold: f64,
    pub t_ms: SimTime,
    pub cleared: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleared_t_ms: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceStats {
    pub count: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Rising,
    Falling,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub xapp_id: String,
    pub window: (SimTime, SimTime),
    pub indications: usize,
    pub metrics: BTreeMap<Metric, MetricStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceStats>,
    pub active_alerts: Vec<String>,
    pub trend_summary: BTreeMap<Metric, Trend>,
}

/// Streak bookkeeping for one alert kind on one series.
#[derive(Debug, Clone, Default)]
struct Streak {
    breaching: u32,
    clean: u32,
    active: Option<usize>,
}

impl Streak {
    /// Feed one indication; returns Raise or Clear when the state flips.
    fn step(&mut self, breach: bool, k_raise: u32, k_clear: u32) -> Option<Flip> {
        match self.active {
            None => {
                self.breaching = if breach { self.breaching + 1 } else { 0 };
                (self.breaching >= k_raise).then_some(Flip::Raise)
            }
            Some(_) => {
                self.clean = if breach { 0 } else { self.clean + 1 };
                (self.clean >= k_clear).then_some(Flip::Clear)
            }
        }
    }

    fn raised(&mut self, idx: usize) {
        self.active = Some(idx);
        self.clean = 0;
    }

    fn cleared(&mut self) {
        self.active = None;
        self.breaching = 0;
        self.clean = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flip {
    Raise,
    Clear,
}

/// Series watched for one threshold, or for one metric when the spec only
/// has a predictor.
#[derive(Debug, Clone)]
struct Track {
    metric: Metric,
    threshold: Option<Threshold>,
    series: Vec<f64>,
    observed: Streak,
    predicted: Streak,
    anomaly: Streak,
}

impl Track {
    fn reduce(&self, samples: &[MetricSample]) -> Option<f64> {
        let values = samples.iter().map(|s| s.value(self.metric));
        match &self.threshold {
            Some(t) => t.comparator.worst(values),
            None => {
                let v: Vec<f64> = values.collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            }
        }
    }

    fn clear_k(&self) -> u32 {
        self.threshold.as_ref().map_or(default_k(), |t| t.consecutive_k)
    }
}

#[derive(Debug, Clone)]
struct Delivered {
    t_ms: SimTime,
    samples: Vec<MetricSample>,
}

/// Alert and report state for one deployed xApp.
#[derive(Debug, Clone)]
pub struct XAppMonitor {
    xapp_id: String,
    spec: XAppSpec,
    tracks: Vec<Track>,
    availability: Streak,
    alerts: Vec<Alert>,
    delivered: Vec<Delivered>,
    inference: Vec<(SimTime, f64)>,
}

impl XAppMonitor {
    pub fn new(xapp_id: impl Into<String>, spec: XAppSpec) -> Result<Self, MonitorError> {
        spec.validate()?;
        let track = |metric, threshold| Track {
            metric,
            threshold,
            series: Vec::new(),
            observed: Streak::default(),
            predicted: Streak::default(),
            anomaly: Streak::default(),
        };
        let mut tracks: Vec<Track> = spec.thresholds.iter().map(|t| track(t.metric, Some(t.clone()))).collect();
        if tracks.is_empty() {
            tracks = spec
                .metrics
                .iter()
                .filter(|m| **m != Metric::Available)
                .map(|m| track(*m, None))
                .collect();
        }
        Ok(Self {
            xapp_id: xapp_id.into(),
            spec,
            tracks,
            availability: Streak::default(),
            alerts: Vec::new(),
            delivered: Vec::new(),
            inference: Vec::new(),
        })
    }

    pub fn xapp_id(&self) -> &str {
        &self.xapp_id
    }

    pub fn spec(&self) -> &XAppSpec {
        &self.spec
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn active_alerts(&self) -> impl Iterator<Item = &Alert> {
        self.alerts.iter().filter(|a| !a.cleared)
    }

    pub fn indication_count(&self) -> usize {
        self.delivered.len()
    }

    fn raise(&mut self, metric: Metric, kind: AlertKind, value: f64, threshold: f64, t_ms: SimTime) -> usize {
        let idx = self.alerts.len();
        self.alerts.push(Alert {
            alert_id: format!("{}-a{}", self.xapp_id, idx + 1),
            xapp_id: self.xapp_id.clone(),
            metric,
            kind,
            value,
            threshold,
            t_ms,
            cleared: false,
            cleared_t_ms: None,
        });
        idx
    }

    fn clear(&mut self, idx: usize, t_ms: SimTime) {
        let a = &mut self.alerts[idx];
        a.cleared = true;
        a.cleared_t_ms = Some(t_ms);
    }

    /// Evaluate one indication. Returns the alerts raised or cleared by it,
    /// in their updated state.
    pub fn observe(&mut self, t_ms: SimTime, samples: &[MetricSample]) -> Vec<Alert> {
        let mut touched: Vec<usize> = Vec::new();
        let predictor = self.spec.predictor.clone();

        for ti in 0..self.tracks.len() {
            let Some(v) = self.tracks[ti].reduce(samples) else { continue };
            self.tracks[ti].series.push(v);
            let k_clear = self.tracks[ti].clear_k();
            let metric = self.tracks[ti].metric;

            if let Some(th) = self.tracks[ti].threshold.clone() {
                let obs = th.comparator.breaches(v, th.value);
                match self.tracks[ti].observed.step(obs, th.consecutive_k, th.consecutive_k) {
                    Some(Flip::Raise) => {
                        let idx = self.raise(metric, AlertKind::ObservedBreach, v, th.value, t_ms);
                        self.tracks[ti].observed.raised(idx);
                        touched.push(idx);
                    }
                    Some(Flip::Clear) => {
                        let idx = self.tracks[ti].observed.active.expect("active");
                        self.clear(idx, t_ms);
                        self.tracks[ti].observed.cleared();
                        touched.push(idx);
                    }
                    None => {}
                }

                if let Some(p) = &predictor {
                    let forecast_hit = holt_forecast(&self.tracks[ti].series, p.alpha, p.beta, p.horizon_steps)
                        .ok()
                        .and_then(|f| f.into_iter().find(|y| th.comparator.breaches(*y, th.value)));
                    let streak = &mut self.tracks[ti].predicted;
                    if streak.active.is_none() {
                        if let (Some(y), false) = (forecast_hit, obs) {
                            let idx = self.raise(metric, AlertKind::PredictedBreach, y, th.value, t_ms);
                            self.tracks[ti].predicted.raised(idx);
                            touched.push(idx);
                        }
                    } else if streak.step(obs || forecast_hit.is_some(), 1, k_clear) == Some(Flip::Clear) {
                        let idx = streak.active.expect("active");
                        self.clear(idx, t_ms);
                        self.tracks[ti].predicted.cleared();
                        touched.push(idx);
                    }
                }
            }

            if let Some(p) = &predictor {
                let test = residual_test(&self.tracks[ti].series, DEFAULT_RESIDUAL_WINDOW, p.alpha, p.beta).ok();
                let anomalous = test.is_some_and(|r| r.anomalous);
                match self.tracks[ti].anomaly.step(anomalous, 1, k_clear) {
                    Some(Flip::Raise) => {
                        let bound = test.map_or(0.0, |r| r.bound);
                        let idx = self.raise(metric, AlertKind::Anomaly, v, bound, t_ms);
                        self.tracks[ti].anomaly.raised(idx);
                        touched.push(idx);
                    }
                    Some(Flip::Clear) => {
                        let idx = self.tracks[ti].anomaly.active.expect("active");
                        self.clear(idx, t_ms);
                        self.tracks[ti].anomaly.cleared();
                        touched.push(idx);
                    }
                    None => {}
                }
            }
        }

        if self.spec.metrics.contains(&Metric::Available) && !samples.is_empty() {
            let up = samples.iter().filter(|s| s.available).count();
            let lost = up < samples.len();
            match self.availability.step(lost, 1, 1) {
                Some(Flip::Raise) => {
                    let frac = up as f64 / samples.len() as f64;
                    let idx = self.raise(Metric::Available, AlertKind::AvailabilityLoss, frac, 1.0, t_ms);
                    self.availability.raised(idx);
                    touched.push(idx);
                }
                Some(Flip::Clear) => {
                    let idx = self.availability.active.expect("active");
                    self.clear(idx, t_ms);
                    self.availability.cleared();
                    touched.push(idx);
                }
                None => {}
            }
        }

        self.delivered.push(Delivered {
            t_ms,
            samples: samples.to_vec(),
        });
        if self.delivered.len() > HISTORY_LIMIT {
            self.delivered.drain(..self.delivered.len() - HISTORY_LIMIT);
        }
        touched.into_iter().map(|i| self.alerts[i].clone()).collect()
    }

    pub fn record_inference(&mut self, t_ms: SimTime, latency_ms: f64) {
        self.inference.push((t_ms, latency_ms));
    }

    /// Summary over indications with `now - window_ms < t <= now`.
    pub fn aggregate_report(&self, window_ms: SimTime, now: SimTime) -> Result<QosReport, MonitorError> {
        let t0 = now.saturating_sub(window_ms);
        let in_window: Vec<&Delivered> = self
            .delivered
            .iter()
            .filter(|d| d.t_ms > t0 && d.t_ms <= now)
            .collect();
        if in_window.is_empty() {
            return Err(MonitorError::NoData);
        }
        let alpha = self.spec.predictor.as_ref().map_or(DEFAULT_ALPHA, |p| p.alpha);
        let beta = self.spec.predictor.as_ref().map_or(DEFAULT_BETA, |p| p.beta);

        let mut metrics = BTreeMap::new();
        let mut trend_summary = BTreeMap::new();
        for &m in &self.spec.metrics {
            let values: Vec<f64> = in_window
                .iter()
                .flat_map(|d| d.samples.iter().map(move |s| s.value(m)))
                .collect();
            if let Some(stats) = MetricStats::of(&values) {
                metrics.insert(m, stats);
            }
            let per_indication: Vec<f64> = in_window
                .iter()
                .filter(|d| !d.samples.is_empty())
                .map(|d| d.samples.iter().map(|s| s.value(m)).sum::<f64>() / d.samples.len() as f64)
                .collect();
            let trend = match holt_state(&per_indication, alpha, beta) {
                Ok(s) if s.trend > 1e-9 => Trend::Rising,
                Ok(s) if s.trend < -1e-9 => Trend::Falling,
                _ => Trend::Flat,
            };
            trend_summary.insert(m, trend);
        }

        let inference = if self.spec.track_inference {
            let lat: Vec<f64> = self
                .inference
                .iter()
                .filter(|(t, _)| *t > t0 && *t <= now)
                .map(|(_, l)| *l)
                .collect();
            MetricStats::of(&lat).map(|s| InferenceStats {
                count: lat.len(),
                mean_ms: s.mean,
                max_ms: s.max,
            })
        } else {
            None
        };

        Ok(QosReport {
            xapp_id: self.xapp_id.clone(),
            window: (t0, now),
            indications: in_window.len(),
            metrics,
            inference,
            active_alerts: self.active_alerts().map(|a| a.alert_id.clone()).collect(),
            trend_summary,
        })
    }
}
