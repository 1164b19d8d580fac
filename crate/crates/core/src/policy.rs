//! Softmax policies over sparse binary features, behavior policies and
//! importance ratios.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::sample_categorical;
use crate::{Error, Result};

/// Sparse parameter vector: `(flat index, value)` pairs.
pub type SparseGrad = Vec<(usize, f64)>;

/// Boltzmann policy `π(a|s) ∝ exp(Σ_{f active} θ[f, a] / temp)`.
///
/// With one-hot features this is the tabular softmax over `θ[s, ·]`; with tile
/// features it is the linear Boltzmann policy. Parameters are stored row-major
/// as `[n_features × n_actions]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    n_features: usize,
    n_actions: usize,
    temperature: f64,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(n_features: usize, n_actions: usize, temperature: f64) -> Result<Self> {
        Self::from_theta(n_features, n_actions, temperature, vec![0.0; n_features * n_actions])
    }

    pub fn from_theta(n_features: usize, n_actions: usize, temperature: f64, theta: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || theta.len() != n_features * n_actions {
            return Err(Error::Shape(format!(
                "theta has {} entries, expected {n_features} x {n_actions}",
                theta.len()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidModel(format!("temperature {temperature} must be positive")));
        }
        Ok(SoftmaxPolicy { n_features, n_actions, temperature, theta })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn max_abs_theta(&self) -> f64 {
        self.theta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `π(·|s)` into `out` (length `n_actions`).
    pub fn probs_into(&self, active: &[usize], out: &mut [f64]) {
        let a_n = self.n_actions;
        out.iter_mut().for_each(|v| *v = 0.0);
        for &f in active {
            let row = &self.theta[f * a_n..(f + 1) * a_n];
            out.iter_mut().zip(row).for_each(|(o, t)| *o += t);
        }
        let max = out.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = ((*v - max) / self.temperature).exp();
            total += *v;
        }
        out.iter_mut().for_each(|v| *v /= total);
    }

    pub fn action_probs(&self, active: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        self.probs_into(active, &mut out);
        out
    }

    /// `∇_θ log π(a|s)` given precomputed `probs = π(·|s)`.
    pub fn grad_log_prob_with(&self, active: &[usize], action: usize, probs: &[f64]) -> SparseGrad {
        let mut g = Vec::with_capacity(active.len() * self.n_actions);
        for &f in active {
            for (b, &p) in probs.iter().enumerate() {
                let ind = if b == action { 1.0 } else { 0.0 };
                g.push((f * self.n_actions + b, (ind - p) / self.temperature));
            }
        }
        g
    }

    pub fn grad_log_prob(&self, active: &[usize], action: usize) -> SparseGrad {
        self.grad_log_prob_with(active, action, &self.action_probs(active))
    }

    /// `θ += scale · ∇ log π(a|s)` without allocating.
    pub fn add_scaled_score(&mut self, active: &[usize], action: usize, probs: &[f64], scale: f64) {
        if scale == 0.0 {
            return;
        }
        let a_n = self.n_actions;
        for &f in active {
            for (b, &p) in probs.iter().enumerate() {
                let ind = if b == action { 1.0 } else { 0.0 };
                self.theta[f * a_n + b] += scale * (ind - p) / self.temperature;
            }
        }
    }

    pub fn apply(&mut self, grad: &[(usize, f64)], scale: f64) {
        for &(i, g) in grad {
            self.theta[i] += scale * g;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, active: &[usize], rng: &mut R) -> usize {
        sample_categorical(self.action_probs(active), rng)
    }

    /// Action probabilities for every state of a one-hot parameterization.
    pub fn table(&self) -> PolicyTable {
        PolicyTable { probs: (0..self.n_features).map(|s| self.action_probs(&[s])).collect() }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let p: SoftmaxPolicy = serde_json::from_str(&text)?;
        Self::from_theta(p.n_features, p.n_actions, p.temperature, p.theta)
    }
}

/// Explicit `π(a|s)` table for tabular MDPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable { probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states] }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }
}

/// Policy that generates experience in off-policy learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorPolicy {
    Uniform,
    Boltzmann {
        policy: SoftmaxPolicy,
    },
    /// Follows the current target policy, so every ratio is exactly 1.
    Target,
}

impl BehaviorPolicy {
    /// Writes `b(·|s)` into `out`; `target` holds `π(·|s)`.
    pub fn probs_into(&self, active: &[usize], target: &[f64], out: &mut [f64]) {
        match self {
            BehaviorPolicy::Uniform => out.iter_mut().for_each(|v| *v = 1.0 / target.len() as f64),
            BehaviorPolicy::Boltzmann { policy } => policy.probs_into(active, out),
            BehaviorPolicy::Target => out.copy_from_slice(target),
        }
    }

    /// Behavior table for tabular problems given the target's table.
    pub fn table(&self, target: &PolicyTable) -> PolicyTable {
        PolicyTable {
            probs: target
                .probs
                .iter()
                .enumerate()
                .map(|(s, p)| {
                    let mut out = vec![0.0; p.len()];
                    self.probs_into(&[s], p, &mut out);
                    out
                })
                .collect(),
        }
    }
}

/// Per-step ratio correction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    PlainIs,
    /// Truncated ratio `min(1, ρ)`.
    Retrace,
}

impl Correction {
    pub fn apply(self, rho: f64) -> f64 {
        match self {
            Correction::PlainIs => rho,
            Correction::Retrace => rho.min(1.0),
        }
    }
}

/// `π(a|s) / b(a|s)`.
pub fn importance_ratio(target: f64, behavior: f64, state: usize, action: usize) -> Result<f64> {
    if behavior <= 0.0 {
        if target <= 0.0 {
            return Ok(0.0);
        }
        return Err(Error::SupportViolation { state, action });
    }
    Ok(target / behavior)
}
