//! Holt's linear method and a residual-based anomaly test.

use super::MonitorError;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.3;
pub const DEFAULT_HORIZON: usize = 5;
pub const DEFAULT_RESIDUAL_WINDOW: usize = 20;
pub const ANOMALY_SIGMAS: f64 = 3.0;

/// Residuals below this (relative to the series scale) count as zero.
const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoltState {
    pub level: f64,
    pub trend: f64,
}

impl HoltState {
    pub fn forecast(&self, steps: usize) -> f64 {
        self.level + steps as f64 * self.trend
    }
}

fn check_params(alpha: f64, beta: f64) -> Result<(), MonitorError> {
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if open_unit(alpha) && open_unit(beta) {
        Ok(())
    } else {
        Err(MonitorError::BadParams(format!("alpha {alpha} and beta {beta} must lie in (0, 1)")))
    }
}

/// Run the recursion over the whole series. `on_step(t, predicted)` sees the
/// one-step-ahead prediction made before `series[t]` is absorbed (t >= 1).
fn holt_run(series: &[f64], alpha: f64, beta: f64, mut on_step: impl FnMut(usize, f64)) -> HoltState {
    let mut s = HoltState {
        level: series[0],
        trend: series[1] - series[0],
    };
    on_step(1, series[0] + (series[1] - series[0]));
    for (t, &y) in series.iter().enumerate().skip(1) {
        if t > 1 {
            on_step(t, s.forecast(1));
        }
        let prev = s.level;
        let level = alpha * y + (1.0 - alpha) * (s.level + s.trend);
        let trend = beta * (level - prev) + (1.0 - beta) * s.trend;
        s = HoltState { level, trend };
    }
    s
}

/// Final level and trend after smoothing `series`.
pub fn holt_state(series: &[f64], alpha: f64, beta: f64) -> Result<HoltState, MonitorError> {
    check_params(alpha, beta)?;
    if series.len() < 2 {
        return Err(MonitorError::TooShort { need: 2, got: series.len() });
    }
    Ok(holt_run(series, alpha, beta, |_, _| {}))
}

/// Forecasts for the next `h` steps.
pub fn holt_forecast(series: &[f64], alpha: f64, beta: f64, h: usize) -> Result<Vec<f64>, MonitorError> {
    if h == 0 {
        return Err(MonitorError::BadParams("horizon must be at least 1".into()));
    }
    let s = holt_state(series, alpha, beta)?;
    Ok((1..=h).map(|k| s.forecast(k)).collect())
}

/// One-step-ahead residuals `y[t] - prediction[t]` for t in 1..len.
pub fn one_step_residuals(series: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>, MonitorError> {
    check_params(alpha, beta)?;
    if series.len() < 2 {
        return Err(MonitorError::TooShort { need: 2, got: series.len() });
    }
    let mut out = Vec::with_capacity(series.len() - 1);
    holt_run(series, alpha, beta, |t, pred| out.push(series[t] - pred));
    Ok(out)
}

pub fn detect_anomaly(series: &[f64], residual_window: usize) -> Result<bool, MonitorError> {
    Ok(residual_test(series, residual_window, DEFAULT_ALPHA, DEFAULT_BETA)?.anomalous)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTest {
    pub residual: f64,
    /// Three standard deviations of the prior residuals.
    pub bound: f64,
    pub anomalous: bool,
}

/// True when the last residual exceeds three standard deviations of the
/// residuals before it (at most `residual_window` of them). With zero spread
/// any nonzero residual is anomalous.
pub fn residual_test(series: &[f64], residual_window: usize, alpha: f64, beta: f64) -> Result<ResidualTest, MonitorError> {
    if residual_window == 0 {
        return Err(MonitorError::BadParams("residual window must be at least 1".into()));
    }
    if series.len() <= residual_window || series.len() < 3 {
        return Err(MonitorError::TooShort {
            need: (residual_window + 1).max(3),
            got: series.len(),
        });
    }
    let r = one_step_residuals(series, alpha, beta)?;
    let (&last, prior) = r.split_last().expect("at least two residuals");
    let prior = &prior[prior.len().saturating_sub(residual_window)..];
    let n = prior.len() as f64;
    let mean = prior.iter().sum::<f64>() / n;
    let sd = (prior.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = series.iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    let tol = ZERO_TOL * scale;
    let bound = ANOMALY_SIGMAS * sd;
    let anomalous = if sd <= tol { last.abs() > tol } else { last.abs() > bound };
    Ok(ResidualTest {
        residual: last,
        bound,
        anomalous,
    })
}
