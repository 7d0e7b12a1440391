//! Streak, forecast and ramp references shared by monitor checks.

use edgeai_core::monitor::{
    holt_forecast, AlertKind, Comparator, Predictor, Threshold, XAppMonitor, XAppSpec,
};
use edgeai_core::ric::Selector;
use edgeai_core::sim::{Metric, MetricSample, SimTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const THRESHOLD: f64 = 50.0;

pub fn spec(k: u32, predictor: Option<Predictor>) -> XAppSpec {
    XAppSpec {
        metrics: vec![Metric::LatencyMs, Metric::ThroughputMbps],
        selector: Selector::Ues { ue_ids: vec!["u".into()] },
        period_ms: 100,
        thresholds: vec![Threshold {
            metric: Metric::LatencyMs,
            comparator: Comparator::Gt,
            value: THRESHOLD,
            consecutive_k: k,
        }],
        predictor,
        track_inference: false,
        instance_id: None,
    }
}

pub fn sample(t: SimTime, flow: &str, latency: f64, tput: f64) -> MetricSample {
    MetricSample {
        t_ms: t,
        flow_id: flow.into(),
        latency_ms: latency,
        throughput_mbps: tput,
        loss_rate: 0.0,
        jitter_ms: 0.0,
        available: true,
    }
}

/// Raise and clear steps from a breach sequence, found by windows rather
/// than counters: a raise at `i` needs the `k` values ending at `i` to breach
/// and to lie after the previous clear; a clear needs `k` clean values after
/// the raise.
pub fn streak_oracle(breach: &[bool], k: usize) -> Vec<(usize, bool)> {
    let mut flips = Vec::new();
    let mut since = 0usize;
    let mut active = false;
    for i in 0..breach.len() {
        if i + 1 < since + k {
            continue;
        }
        let window = &breach[i + 1 - k..=i];
        if !active && window.iter().all(|b| *b) {
            flips.push((i, true));
            active = true;
            since = i + 1;
        } else if active && window.iter().all(|b| !*b) {
            flips.push((i, false));
            active = false;
            since = i + 1;
        }
    }
    flips
}

/// Feed `breach` through a k=3 monitor over `flows` flows and compare its
/// raises and clears with the oracle.
pub fn k3_check(breach: &[bool], flows: usize) -> Result<(), String> {
    let mut m = XAppMonitor::new("x", spec(3, None)).map_err(|e| e.to_string())?;
    let mut flips = Vec::new();
    for (i, b) in breach.iter().enumerate() {
        let t = (i as SimTime + 1) * 100;
        // One flow carries the signal; the others stay clean, so the
        // worst-flow reduction reproduces it.
        let samples: Vec<MetricSample> = (0..flows)
            .map(|f| sample(t, &format!("f{f}"), if f == 0 && *b { 80.0 } else { 20.0 }, 5.0))
            .collect();
        for a in m.observe(t, &samples) {
            if a.kind != AlertKind::ObservedBreach {
                return Err(format!("unexpected {:?} alert", a.kind));
            }
            flips.push((i, !a.cleared));
        }
    }
    let want = streak_oracle(breach, 3);
    if flips != want {
        return Err(format!("monitor {flips:?}, oracle {want:?} for {breach:?}"));
    }
    if m.active_alerts().count() > 1 {
        return Err("more than one active alert".into());
    }
    Ok(())
}

pub fn constant_exact(c: f64, n: usize, h: usize, alpha: f64, beta: f64) -> Result<(), String> {
    let f = holt_forecast(&vec![c; n], alpha, beta, h).map_err(|e| e.to_string())?;
    match f.iter().find(|y| (*y - c).abs() > 1e-9) {
        Some(y) => Err(format!("constant {c}: forecast {y}")),
        None => Ok(()),
    }
}

pub fn affine_exact(a: f64, b: f64, n: usize, h: usize, alpha: f64, beta: f64) -> Result<(), String> {
    let series: Vec<f64> = (0..n).map(|t| a + b * t as f64).collect();
    let f = holt_forecast(&series, alpha, beta, h).map_err(|e| e.to_string())?;
    for (i, y) in f.iter().enumerate() {
        let want = a + b * (n + i) as f64;
        if (y - want).abs() > 1e-9 {
            return Err(format!("{a} + {b}t, step {}: {y} vs {want}", i + 1));
        }
    }
    Ok(())
}

/// Independent recursion for a frozen reference value.
pub fn holt_reference(series: &[f64], alpha: f64, beta: f64, h: usize) -> f64 {
    let mut level = series[0];
    let mut trend = series[1] - series[0];
    for y in &series[1..] {
        let next_level = alpha * y + (1.0 - alpha) * (level + trend);
        trend = beta * (next_level - level) + (1.0 - beta) * trend;
        level = next_level;
    }
    level + h as f64 * trend
}

/// First alert time of each kind on a noisy rising latency ramp.
pub fn ramp_trial(seed: u64) -> (Option<SimTime>, Option<SimTime>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut m = XAppMonitor::new("x", spec(3, Some(Predictor::default()))).unwrap();
    let (mut predicted, mut observed) = (None, None);
    for i in 0..60u64 {
        let t = (i + 1) * 100;
        let v = 20.0 + i as f64 + noise.sample(&mut rng);
        for a in m.observe(t, &[sample(t, "f", v, 5.0)]) {
            match a.kind {
                AlertKind::PredictedBreach if predicted.is_none() => predicted = Some(t),
                AlertKind::ObservedBreach if observed.is_none() => observed = Some(t),
                _ => {}
            }
        }
    }
    (predicted, observed)
}

/// Trials among `seeds` where predicted_breach fires strictly first.
pub fn ramp_wins(seeds: std::ops::Range<u64>) -> usize {
    seeds
        .filter(|s| matches!(ramp_trial(*s), (Some(p), Some(o)) if p < o))
        .count()
}
