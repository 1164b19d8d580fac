//! Episodic actor-critic learners: risk-neutral AC, on- and off-policy
//! variance-penalized AC, and the indirect (second-moment) baselines.

mod accum;
mod indirect;
mod vpac;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use accum::EpisodeAccumulators;
pub use indirect::{run_episode_vaac, run_episode_vaac_td};
pub use vpac::{run_episode_ac, run_episode_vpac_off, run_episode_vpac_on};

use crate::critic::{CriticPair, StepSchedule, StepSizes};
use crate::envs::Environment;
use crate::features::FeatureMap;
use crate::policy::{BehaviorPolicy, Correction, SoftmaxPolicy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "VPAC_ON")]
    VpacOn,
    #[serde(rename = "VPAC_OFF")]
    VpacOff,
    #[serde(rename = "VAAC")]
    Vaac,
    #[serde(rename = "VAAC_TD")]
    VaacTd,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Ac, Algo::VpacOn, Algo::VpacOff, Algo::Vaac, Algo::VaacTd];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ac => "AC",
            Algo::VpacOn => "VPAC_ON",
            Algo::VpacOff => "VPAC_OFF",
            Algo::Vaac => "VAAC",
            Algo::VaacTd => "VAAC_TD",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Undefined(format!("unknown algorithm {s:?}")))
    }
}

/// Hyperparameters of one learning run. `psi` doubles as the `μ` of the
/// indirect algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algo: Algo,
    #[serde(default)]
    pub psi: f64,
    pub gamma: f64,
    pub step_sizes: StepSizes,
    pub temperature: f64,
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_behavior")]
    pub behavior: BehaviorPolicy,
    #[serde(default)]
    pub correction: Correction,
    #[serde(default)]
    pub strict_step_sizes: bool,
    #[serde(default)]
    pub schedule: StepSchedule,
}

fn default_behavior() -> BehaviorPolicy {
    BehaviorPolicy::Uniform
}

impl AlgoConfig {
    pub fn new(algo: Algo, psi: f64, gamma: f64, step_sizes: StepSizes, temperature: f64, episodes: usize) -> Self {
        AlgoConfig {
            algo,
            psi,
            gamma,
            step_sizes,
            temperature,
            episodes,
            seed: 0,
            behavior: BehaviorPolicy::Uniform,
            correction: Correction::PlainIs,
            strict_step_sizes: false,
            schedule: StepSchedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(Error::InvalidModel(format!("psi {} must be finite and >= 0", self.psi)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidModel(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidModel("episodes must be >= 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidModel(format!("temperature {} must be positive", self.temperature)));
        }
        match self.algo {
            Algo::VpacOn | Algo::VpacOff => self.step_sizes.validate(self.strict_step_sizes),
            _ => self.step_sizes.check_rates(),
        }
    }
}

/// Summary of one training episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub steps: usize,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    /// The episode hit the step cap before terminating.
    pub truncated: bool,
    pub negative_sigma_reads: u64,
}

impl EpisodeStats {
    fn record(&mut self, reward: f64, discount: f64) {
        self.discounted_return += discount * reward;
        self.undiscounted_return += reward;
        self.steps += 1;
    }
}

/// Learnable state of a run: target policy, critics, and the start-state
/// value estimate used by the Monte-Carlo baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: SoftmaxPolicy,
    pub critic: CriticPair,
    #[serde(default)]
    pub v0: f64,
}

impl Agent {
    pub fn new(n_features: usize, n_actions: usize, temperature: f64) -> Result<Self> {
        Ok(Agent {
            policy: SoftmaxPolicy::new(n_features, n_actions, temperature)?,
            critic: CriticPair::zeros(n_features, n_actions),
            v0: 0.0,
        })
    }

    /// Errors if any parameter is non-finite or exceeds `limit` in magnitude.
    pub fn check_finite(&self, limit: f64) -> Result<()> {
        let parts = [
            ("theta", self.policy.theta()),
            ("value weights", self.critic.q.weights()),
            ("variance weights", self.critic.sigma.weights()),
        ];
        for (name, xs) in parts {
            if let Some(v) = xs.iter().find(|v| !v.is_finite() || v.abs() > limit) {
                return Err(Error::Diverged(format!("{name} reached {v}")));
            }
        }
        if !self.v0.is_finite() {
            return Err(Error::Diverged(format!("start value reached {}", self.v0)));
        }
        Ok(())
    }
}

/// Magnitude beyond which parameters count as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Runs one episode of `cfg.algo`.
pub fn run_episode<E, F, R>(
    env: &E,
    features: &F,
    agent: &mut Agent,
    cfg: &AlgoConfig,
    rng: &mut R,
) -> Result<EpisodeStats>
where
    E: Environment,
    F: FeatureMap<E::State>,
    R: Rng + ?Sized,
{
    let stats = match cfg.algo {
        Algo::Ac => run_episode_ac(env, features, &mut agent.policy, &mut agent.critic, cfg, rng),
        Algo::VpacOn => run_episode_vpac_on(env, features, &mut agent.policy, &mut agent.critic, cfg, rng),
        Algo::VpacOff => {
            run_episode_vpac_off(env, features, &mut agent.policy, &cfg.behavior, &mut agent.critic, cfg, rng)
        }
        Algo::Vaac => run_episode_vaac(env, features, &mut agent.policy, &mut agent.critic, &mut agent.v0, cfg, rng),
        Algo::VaacTd => run_episode_vaac_td(env, features, &mut agent.policy, &mut agent.critic, cfg, rng),
    }?;
    agent.check_finite(DIVERGENCE_LIMIT)?;
    Ok(stats)
}
