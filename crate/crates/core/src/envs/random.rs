use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MdpDef, Outcome, RewardDist, TabularMdp, TABULAR_EPISODE_CAP};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Parameters for [`random_mdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMdpSpec {
    /// Non-terminal states; one absorbing terminal is appended.
    pub n_states: usize,
    pub n_actions: usize,
    /// Successors sampled per state-action pair (besides the terminal).
    pub branching: usize,
    pub min_termination: f64,
    pub max_termination: f64,
    pub discount: f64,
    /// Fraction of outcomes with Gaussian rewards.
    pub stochastic_reward_frac: f64,
    pub reward_scale: f64,
    pub max_std: f64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        RandomMdpSpec {
            n_states: 6,
            n_actions: 3,
            branching: 3,
            min_termination: 0.1,
            max_termination: 0.4,
            discount: 0.95,
            stochastic_reward_frac: 0.5,
            reward_scale: 2.0,
            max_std: 2.0,
        }
    }
}

/// Random episodic MDP: every non-terminal pair reaches the terminal with
/// probability at least `min_termination`, so every policy terminates.
pub fn random_mdp(spec: &RandomMdpSpec, seed: u64) -> Result<TabularMdp> {
    if spec.n_states == 0 || spec.n_actions == 0 || spec.branching == 0 {
        return Err(Error::InvalidModel("random MDP needs states, actions and branching".into()));
    }
    if !(0.0 < spec.min_termination && spec.min_termination <= spec.max_termination && spec.max_termination < 1.0) {
        return Err(Error::InvalidModel("termination range must satisfy 0 < min <= max < 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = spec.n_states;
    let term = n;
    let mut outcomes = Vec::with_capacity((n + 1) * spec.n_actions);
    let reward = |rng: &mut crate::rng::Rng| {
        let mean = rng.random_range(-spec.reward_scale..=spec.reward_scale);
        if rng.random::<f64>() < spec.stochastic_reward_frac {
            RewardDist::normal(mean, rng.random_range(0.1..=spec.max_std.max(0.1)))
        } else {
            RewardDist::constant(mean)
        }
    };
    for _ in 0..n {
        for _ in 0..spec.n_actions {
            let p_term = rng.random_range(spec.min_termination..=spec.max_termination);
            let weights: Vec<f64> = (0..spec.branching).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = weights.iter().sum();
            let mut row = vec![Outcome { next: term, prob: p_term, reward: reward(&mut rng) }];
            for w in weights {
                let next = rng.random_range(0..n);
                let prob = (1.0 - p_term) * w / total;
                if let Some(o) = row.iter_mut().find(|o| o.next == next) {
                    o.prob += prob;
                } else {
                    row.push(Outcome { next, prob, reward: reward(&mut rng) });
                }
            }
            outcomes.push(row);
        }
    }
    for _ in 0..spec.n_actions {
        outcomes.push(vec![Outcome { next: term, prob: 1.0, reward: RewardDist::constant(0.0) }]);
    }
    let mut initial_dist: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = initial_dist.iter().sum();
    initial_dist.iter_mut().for_each(|p| *p /= total);
    initial_dist.push(0.0);
    let mut terminal = vec![false; n + 1];
    terminal[term] = true;
    TabularMdp::new(MdpDef {
        n_states: n + 1,
        n_actions: spec.n_actions,
        discount: spec.discount,
        initial_dist,
        terminal,
        outcomes,
        max_steps: TABULAR_EPISODE_CAP,
        layout: None,
    })
}
