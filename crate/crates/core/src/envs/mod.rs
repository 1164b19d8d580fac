//! Environments: an explicit finite MDP container, the gridworlds built on
//! it and a continuous puddle world.

mod cont_puddle;
mod grid;
mod random;

pub use cont_puddle::{ContPuddleWorld, PuddleAction};
pub use grid::{four_rooms, puddle_grid, Cell, FourRoomsOptions, GridSpec, PuddleGridOptions};
pub use random::{random_mdp, RandomMdpSpec};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default truncation horizon for tabular episodes.
pub const TABULAR_EPISODE_CAP: usize = 2000;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<S> {
    pub next_state: S,
    pub reward: f64,
    pub done: bool,
}

/// Episodic simulator interface shared by tabular and continuous worlds.
pub trait Environment {
    type State: Clone + std::fmt::Debug;

    fn n_actions(&self) -> usize;
    fn discount(&self) -> f64;
    /// Steps after which an episode is truncated.
    fn max_steps(&self) -> usize;
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut R,
    ) -> Result<StepOutcome<Self::State>>;
}

/// Distribution of the reward attached to one `(s, a, s')` outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardDist {
    Constant {
        value: f64,
    },
    /// `std` is a standard deviation, not a variance.
    Normal {
        mean: f64,
        std: f64,
    },
}

impl RewardDist {
    pub fn constant(value: f64) -> Self {
        RewardDist::Constant { value }
    }

    pub fn normal(mean: f64, std: f64) -> Self {
        RewardDist::Normal { mean, std }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RewardDist::Constant { value } => value,
            RewardDist::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            RewardDist::Constant { .. } => 0.0,
            RewardDist::Normal { std, .. } => std * std,
        }
    }

    /// `E[R^2]`.
    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        m * m + self.variance()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardDist::Constant { value } => value,
            RewardDist::Normal { mean, std } => {
                if std == 0.0 {
                    mean
                } else {
                    // Validated at construction.
                    Normal::new(mean, std).expect("finite std").sample(rng)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RewardDist::Constant { value } => value.is_finite(),
            RewardDist::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("bad reward distribution {self:?}")))
        }
    }
}

/// One successor of a state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: RewardDist,
}

/// Geometry of a gridworld-backed MDP, used for visitation maps and ASCII
/// rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// `(row, col)` of each state.
    pub cells: Vec<(usize, usize)>,
    /// Frozen / puddle states with a high-variance reward.
    pub risky: Vec<bool>,
}

impl GridLayout {
    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.cells.iter().position(|&c| c == (row, col))
    }
}

/// Serialized form of [`TabularMdp`]; validated on conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDef {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
    pub terminal: Vec<bool>,
    /// Successor lists indexed by `s * n_actions + a`.
    pub outcomes: Vec<Vec<Outcome>>,
    #[serde(default = "default_cap")]
    pub max_steps: usize,
    #[serde(default)]
    pub layout: Option<GridLayout>,
}

fn default_cap() -> usize {
    TABULAR_EPISODE_CAP
}

/// Explicit finite MDP with per-`(s, a, s')` reward distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDef", into = "MdpDef")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    initial_dist: Vec<f64>,
    terminal: Vec<bool>,
    outcomes: Vec<Vec<Outcome>>,
    max_steps: usize,
    layout: Option<GridLayout>,
}

impl TryFrom<MdpDef> for TabularMdp {
    type Error = Error;

    fn try_from(d: MdpDef) -> Result<Self> {
        let mdp = TabularMdp {
            n_states: d.n_states,
            n_actions: d.n_actions,
            discount: d.discount,
            initial_dist: d.initial_dist,
            terminal: d.terminal,
            outcomes: d.outcomes,
            max_steps: d.max_steps,
            layout: d.layout,
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

impl From<TabularMdp> for MdpDef {
    fn from(m: TabularMdp) -> Self {
        MdpDef {
            n_states: m.n_states,
            n_actions: m.n_actions,
            discount: m.discount,
            initial_dist: m.initial_dist,
            terminal: m.terminal,
            outcomes: m.outcomes,
            max_steps: m.max_steps,
            layout: m.layout,
        }
    }
}

impl TabularMdp {
    pub fn new(def: MdpDef) -> Result<Self> {
        Self::try_from(def)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return bad("empty state or action space".into());
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1]", self.discount));
        }
        if self.terminal.len() != ns || self.initial_dist.len() != ns {
            return bad("terminal / initial_dist length differs from n_states".into());
        }
        if self.outcomes.len() != ns * na {
            return bad(format!("expected {} outcome lists, got {}", ns * na, self.outcomes.len()));
        }
        if self.initial_dist.iter().any(|&p| p.is_nan() || p < 0.0) {
            return bad("negative initial probability".into());
        }
        let total: f64 = self.initial_dist.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return bad(format!("initial distribution sums to {total}"));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = &self.outcomes[s * na + a];
                let mut sum = 0.0;
                for o in row {
                    if o.next >= ns || o.prob.is_nan() || o.prob < 0.0 {
                        return bad(format!("bad outcome {o:?} at ({s}, {a})"));
                    }
                    o.reward.validate()?;
                    sum += o.prob;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return bad(format!("P(.|{s},{a}) sums to {sum}"));
                }
                if self.terminal[s] {
                    let self_loop =
                        row.iter().all(|o| o.prob == 0.0 || (o.next == s && o.reward == RewardDist::constant(0.0)));
                    if !self_loop {
                        return bad(format!("terminal state {s} must self-loop with reward 0"));
                    }
                }
            }
        }
        if let Some(layout) = &self.layout {
            if layout.cells.len() != ns || layout.risky.len() != ns {
                return bad("layout does not cover every state".into());
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s * self.n_actions + a]
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    /// `P(s' | s, a)`.
    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.outcomes(s, a).iter().filter(|o| o.next == next).map(|o| o.prob).sum()
    }

    /// Expected immediate reward `r(s, a)`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.outcomes(s, a).iter().map(|o| o.prob * o.reward.mean()).sum()
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        self.discount = discount;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn to_def(&self) -> MdpDef {
        self.clone().into()
    }
}

/// Index drawn from a discrete distribution by inverse CDF with one uniform.
pub fn sample_categorical<R: Rng + ?Sized>(probs: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum.
    last_positive
}

impl Environment for TabularMdp {
    type State = usize;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(self.initial_dist.iter().copied(), rng)
    }

    fn step<R: Rng + ?Sized>(&self, &s: &usize, action: usize, rng: &mut R) -> Result<StepOutcome<usize>> {
        if action >= self.n_actions {
            return Err(Error::InvalidAction { action, n_actions: self.n_actions });
        }
        let row = self.outcomes(s, action);
        let k = sample_categorical(row.iter().map(|o| o.prob), rng);
        let o = &row[k];
        let reward = o.reward.sample(rng);
        Ok(StepOutcome { next_state: o.next, reward, done: self.terminal[o.next] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn two_state() -> MdpDef {
        MdpDef {
            n_states: 2,
            n_actions: 1,
            discount: 0.9,
            initial_dist: vec![1.0, 0.0],
            terminal: vec![false, true],
            outcomes: vec![
                vec![Outcome { next: 1, prob: 1.0, reward: RewardDist::constant(2.0) }],
                vec![Outcome { next: 1, prob: 1.0, reward: RewardDist::constant(0.0) }],
            ],
            max_steps: 10,
            layout: None,
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let mut d = two_state();
        d.outcomes[0][0].prob = 0.9;
        assert!(TabularMdp::new(d).is_err());
    }

    #[test]
    fn rejects_terminal_without_zero_self_loop() {
        let mut d = two_state();
        d.outcomes[1][0].reward = RewardDist::constant(1.0);
        assert!(TabularMdp::new(d).is_err());
    }

    #[test]
    fn rejects_bad_discount_and_initial_dist() {
        let mut d = two_state();
        d.discount = 1.5;
        assert!(TabularMdp::new(d).is_err());
        let mut d = two_state();
        d.initial_dist = vec![0.5, 0.4];
        assert!(TabularMdp::new(d).is_err());
    }

    #[test]
    fn invalid_action_is_an_error() {
        let mdp = TabularMdp::new(two_state()).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(matches!(mdp.step(&0, 3, &mut rng), Err(Error::InvalidAction { .. })));
        let out = mdp.step(&0, 0, &mut rng).unwrap();
        assert_eq!(out, StepOutcome { next_state: 1, reward: 2.0, done: true });
    }

    #[test]
    fn serde_round_trip_validates() {
        let mdp = TabularMdp::new(two_state()).unwrap();
        let json = serde_json::to_string(&mdp).unwrap();
        let back: TabularMdp = serde_json::from_str(&json).unwrap();
        assert_eq!(mdp, back);
        let broken = json.replace("\"prob\":1.0", "\"prob\":0.5");
        assert!(serde_json::from_str::<TabularMdp>(&broken).is_err());
    }

    #[test]
    fn categorical_sampler_respects_zero_mass() {
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            let i = sample_categorical([0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
