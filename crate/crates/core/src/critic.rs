//! Linear value and variance critics with TD(0) updates.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `f(s, a) = Σ_{i active} w[i, a]`; one-hot features make this a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFn {
    n_features: usize,
    n_actions: usize,
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    visits: Vec<u64>,
}

impl LinearFn {
    pub fn zeros(n_features: usize, n_actions: usize) -> Self {
        LinearFn { n_features, n_actions, weights: vec![0.0; n_features * n_actions], visits: Vec::new() }
    }

    pub fn from_weights(n_features: usize, n_actions: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_features * n_actions {
            return Err(Error::Shape(format!("{} weights for {n_features} x {n_actions}", weights.len())));
        }
        Ok(LinearFn { n_features, n_actions, weights, visits: Vec::new() })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn value(&self, active: &[usize], action: usize) -> f64 {
        active.iter().map(|&f| self.weights[f * self.n_actions + action]).sum()
    }

    /// Adds `alpha · delta / |active|` to every active weight.
    #[inline]
    pub fn update(&mut self, active: &[usize], action: usize, alpha: f64, delta: f64) {
        let step = alpha * delta / active.len() as f64;
        for &f in active {
            self.weights[f * self.n_actions + action] += step;
        }
    }

    /// As [`LinearFn::update`] but with `alpha` decayed per weight by `schedule`.
    pub fn update_scheduled(
        &mut self,
        active: &[usize],
        action: usize,
        alpha: f64,
        schedule: StepSchedule,
        delta: f64,
    ) {
        if let StepSchedule::Constant = schedule {
            return self.update(active, action, alpha, delta);
        }
        if self.visits.is_empty() {
            self.visits = vec![0; self.weights.len()];
        }
        let n = active.len() as f64;
        for &f in active {
            let i = f * self.n_actions + action;
            self.weights[i] += schedule.rate(alpha, self.visits[i]) * delta / n;
            self.visits[i] += 1;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `[state][action]` table for one-hot features.
    pub fn table(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }
}

/// Step-size decay law.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `alpha / (1 + visits / scale)`.
    Visits { scale: f64 },
}

impl StepSchedule {
    pub fn rate(self, alpha: f64, visits: u64) -> f64 {
        match self {
            StepSchedule::Constant => alpha,
            StepSchedule::Visits { scale } => alpha / (1.0 + visits as f64 / scale),
        }
    }
}

/// Actor, variance and value step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub alpha_theta: f64,
    pub alpha_w: f64,
    pub alpha_z: f64,
}

impl StepSizes {
    /// Requires positive finite rates. The timescale ordering
    /// `alpha_theta < alpha_z < alpha_w` is an error when `strict` and a
    /// logged warning otherwise.
    pub fn validate(&self, strict: bool) -> Result<()> {
        self.check_rates()?;
        if !(self.alpha_theta < self.alpha_z && self.alpha_z < self.alpha_w) {
            let msg = format!(
                "expected alpha_theta < alpha_z < alpha_w, got {} / {} / {}",
                self.alpha_theta, self.alpha_z, self.alpha_w
            );
            if strict {
                return Err(Error::StepSizeOrdering(msg));
            }
            log::warn!("{msg}");
        }
        Ok(())
    }

    /// Requires every rate to be finite and non-negative.
    pub fn check_rates(&self) -> Result<()> {
        for (name, v) in [("alpha_theta", self.alpha_theta), ("alpha_w", self.alpha_w), ("alpha_z", self.alpha_z)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::StepSizeOrdering(format!("{name} = {v} is not a finite non-negative rate")));
            }
        }
        Ok(())
    }
}

/// One observed step; `next` is `None` when `S'` is terminal.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub active: &'a [usize],
    pub action: usize,
    pub reward: f64,
    pub next: Option<(&'a [usize], usize)>,
}

/// Value critic `Q̂` and direct variance critic `σ̂` (or second-moment critic
/// for the indirect algorithms).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticPair {
    pub q: LinearFn,
    pub sigma: LinearFn,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(skip)]
    negative_sigma_reads: Cell<u64>,
}

impl PartialEq for CriticPair {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.sigma == other.sigma && self.schedule == other.schedule
    }
}

impl CriticPair {
    pub fn zeros(n_features: usize, n_actions: usize) -> Self {
        CriticPair {
            q: LinearFn::zeros(n_features, n_actions),
            sigma: LinearFn::zeros(n_features, n_actions),
            schedule: StepSchedule::Constant,
            negative_sigma_reads: Cell::new(0),
        }
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn q_value(&self, active: &[usize], action: usize) -> f64 {
        self.q.value(active, action)
    }

    /// Reads `σ̂`, counting negative reads.
    pub fn sigma_value(&self, active: &[usize], action: usize) -> f64 {
        let v = self.sigma.value(active, action);
        if v < 0.0 {
            self.negative_sigma_reads.set(self.negative_sigma_reads.get() + 1);
        }
        v
    }

    pub fn negative_sigma_reads(&self) -> u64 {
        self.negative_sigma_reads.get()
    }

    /// `δ = r + γ·ρ'·Q̂(s', a') − Q̂(s, a)`; `rho_next = None` means on-policy.
    pub fn td_error_value(&self, t: &Transition, gamma: f64, rho_next: Option<f64>) -> f64 {
        let boot = match t.next {
            Some((active, a)) => gamma * rho_next.unwrap_or(1.0) * self.q.value(active, a),
            None => 0.0,
        };
        t.reward + boot - self.q.value(t.active, t.action)
    }

    /// `δ̄ = δ² + γ̄·ρ'²·σ̂(s', a') − σ̂(s, a)`.
    pub fn td_error_variance(&self, delta: f64, t: &Transition, gamma_bar: f64, rho_next: Option<f64>) -> f64 {
        let boot = match t.next {
            Some((active, a)) => {
                let rho = rho_next.unwrap_or(1.0);
                gamma_bar * rho * rho * self.sigma_value(active, a)
            }
            None => 0.0,
        };
        delta * delta + boot - self.sigma_value(t.active, t.action)
    }

    pub fn update_value(&mut self, active: &[usize], action: usize, alpha: f64, delta: f64) {
        self.q.update_scheduled(active, action, alpha, self.schedule, delta);
    }

    pub fn update_variance(&mut self, active: &[usize], action: usize, alpha: f64, delta: f64) {
        self.sigma.update_scheduled(active, action, alpha, self.schedule, delta);
    }
}
