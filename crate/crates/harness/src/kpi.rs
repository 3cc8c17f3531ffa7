//! Tracking and smoothness KPIs of a closed-loop run.

use deepc_core::Error;
use serde::{Deserialize, Serialize};

use crate::sim::StepRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    /// Steps after the settling window that enter the KPIs.
    pub steps: usize,
    pub settle_steps: usize,
    /// RMSE of `y_true - y_ref`, K.
    pub rmse_k: f64,
    /// Lag-1 autocorrelation of the applied input; 1 is smoothest.
    pub smoothness: f64,
    /// Set when the input is constant and the autocorrelation undefined;
    /// `smoothness` is then reported as 1.
    pub smoothness_undefined: bool,
    /// Mean of `y_true - y_ref` over the last `bias_window` steps, K.
    pub mean_error_k: f64,
    pub bias_window: usize,
    pub max_abs_error_k: f64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

/// KPIs over the records after the first `settle_steps`.
pub fn compute_kpis(records: &[StepRecord], settle_steps: usize, bias_window: usize) -> Result<KpiRecord, Error> {
    if records.len() <= settle_steps + 2 {
        return Err(Error::Dimension(format!(
            "{} records leave no KPI window after {} settling steps",
            records.len(),
            settle_steps
        )));
    }
    let window = &records[settle_steps..];
    if bias_window == 0 || bias_window > window.len() {
        return Err(Error::Config(format!(
            "bias window must be in 1..={}, got {}",
            window.len(),
            bias_window
        )));
    }
    let n = window.len() as f64;
    let errors: Vec<f64> = window.iter().map(|r| r.y_true - r.y_ref).collect();
    let rmse_k = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let max_abs_error_k = errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let tail = &errors[errors.len() - bias_window..];
    let mean_error_k = tail.iter().sum::<f64>() / bias_window as f64;

    let u: Vec<f64> = window.iter().map(|r| r.u).collect();
    let (smoothness, smoothness_undefined) = match lag1_autocorrelation(&u) {
        Some(r) => (r, false),
        None => (1.0, true),
    };

    let solve: Vec<f64> = window.iter().map(|r| r.solve_ms).collect();
    Ok(KpiRecord {
        steps: window.len(),
        settle_steps,
        rmse_k,
        smoothness,
        smoothness_undefined,
        mean_error_k,
        bias_window,
        max_abs_error_k,
        mean_solve_ms: solve.iter().sum::<f64>() / n,
        max_solve_ms: solve.iter().fold(0.0, |m: f64, &s| m.max(s)),
    })
}

/// `Σ (u_t - ū)(u_{t+1} - ū) / Σ (u_t - ū)²`, or `None` for a constant
/// sequence.
pub fn lag1_autocorrelation(u: &[f64]) -> Option<f64> {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let den: f64 = u.iter().map(|v| (v - mean).powi(2)).sum();
    let scale = u.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if den <= (1e-12 * scale).powi(2) * u.len() as f64 {
        return None;
    }
    let num: f64 = u.windows(2).map(|p| (p[0] - mean) * (p[1] - mean)).sum();
    Some((num / den).clamp(-1.0, 1.0))
}
