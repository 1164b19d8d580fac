use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, RewardDist, StepOutcome};
use crate::{Error, Result};

/// Moves along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PuddleAction {
    Right,
    Left,
    Up,
    Down,
}

impl PuddleAction {
    pub const ALL: [PuddleAction; 4] = [PuddleAction::Right, PuddleAction::Left, PuddleAction::Up, PuddleAction::Down];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn direction(self) -> [f64; 2] {
        match self {
            PuddleAction::Right => [1.0, 0.0],
            PuddleAction::Left => [-1.0, 0.0],
            PuddleAction::Up => [0.0, 1.0],
            PuddleAction::Down => [0.0, -1.0],
        }
    }
}

/// Continuous puddle world on the unit square.
///
/// Each action moves `step` along its axis plus independent uniform noise in
/// `[-noise, noise]` on both coordinates, clipped to the square. Landing in
/// the puddle pays a `puddle_reward` draw; reaching within L1 distance
/// `goal_radius` of `(1, 1)` pays `goal_reward` and ends the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContPuddleWorld {
    pub step: f64,
    pub noise: f64,
    pub puddle_lo: f64,
    pub puddle_hi: f64,
    pub puddle_reward: RewardDist,
    pub goal_radius: f64,
    pub goal_reward: f64,
    pub discount: f64,
    pub max_steps: usize,
}

impl Default for ContPuddleWorld {
    fn default() -> Self {
        ContPuddleWorld {
            step: 0.05,
            noise: 0.025,
            puddle_lo: 0.3,
            puddle_hi: 0.7,
            puddle_reward: RewardDist::normal(0.0, 8.0),
            goal_radius: 0.1,
            goal_reward: 50.0,
            discount: 0.99,
            max_steps: 5000,
        }
    }
}

impl ContPuddleWorld {
    pub fn in_puddle(&self, [x, y]: [f64; 2]) -> bool {
        (self.puddle_lo..=self.puddle_hi).contains(&x) && (self.puddle_lo..=self.puddle_hi).contains(&y)
    }

    pub fn at_goal(&self, [x, y]: [f64; 2]) -> bool {
        (1.0 - x).abs() + (1.0 - y).abs() <= self.goal_radius
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.noise >= 0.0 && self.goal_radius > 0.0) {
            return Err(Error::InvalidModel("step, noise and goal radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidModel(format!("discount {} outside [0, 1]", self.discount)));
        }
        Ok(())
    }
}

impl Environment for ContPuddleWorld {
    type State = [f64; 2];

    fn n_actions(&self) -> usize {
        PuddleAction::ALL.len()
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Uniform over the square, excluding the goal region.
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        loop {
            let s = [rng.random::<f64>(), rng.random::<f64>()];
            if !self.at_goal(s) {
                return s;
            }
        }
    }

    fn step<R: Rng + ?Sized>(&self, state: &[f64; 2], action: usize, rng: &mut R) -> Result<StepOutcome<[f64; 2]>> {
        let act = PuddleAction::from_index(action).ok_or(Error::InvalidAction { action, n_actions: 4 })?;
        let dir = act.direction();
        let mut next = [0.0; 2];
        for i in 0..2 {
            let jitter = if self.noise > 0.0 { rng.random_range(-self.noise..=self.noise) } else { 0.0 };
            next[i] = (state[i] + self.step * dir[i] + jitter).clamp(0.0, 1.0);
        }
        let done = self.at_goal(next);
        let mut reward = if done { self.goal_reward } else { 0.0 };
        if self.in_puddle(next) {
            reward += self.puddle_reward.sample(rng);
        }
        Ok(StepOutcome { next_state: next, reward, done })
    }
}
