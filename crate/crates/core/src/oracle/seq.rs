use super::ReturnStats;
use crate::{Error, Result};

/// `A_t = Σ_{l≥0} (discount·λ)^l δ_{t+l}` by backward recursion.
pub fn gae(deltas: &[f64], discount: f64, lambda: f64) -> Vec<f64> {
    let decay = discount * lambda;
    let mut out = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        acc = deltas[t] + decay * acc;
        out[t] = acc;
    }
    out
}

/// Same sum evaluated term by term in `O(T²)`.
pub fn gae_direct(deltas: &[f64], discount: f64, lambda: f64) -> Vec<f64> {
    let decay = discount * lambda;
    (0..deltas.len()).map(|t| deltas[t..].iter().enumerate().map(|(l, d)| decay.powi(l as i32) * d).sum()).collect()
}

/// `mean / √variance`.
pub fn sharpe(stats: &ReturnStats) -> Result<f64> {
    if stats.variance.is_nan() || stats.variance <= 0.0 {
        return Err(Error::Undefined(format!("Sharpe ratio with variance {}", stats.variance)));
    }
    Ok(stats.mean / stats.variance.sqrt())
}
