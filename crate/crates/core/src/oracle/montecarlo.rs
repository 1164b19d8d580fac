use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{sample_categorical, Environment, TabularMdp};
use crate::policy::PolicyTable;
use crate::{Error, Result};

/// Sample moments of discounted returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub mean: f64,
    /// Unbiased (`n − 1`) sample variance.
    pub variance: f64,
    pub count: usize,
    pub std_error_mean: f64,
    /// Large-sample standard error of `variance`, `√((m₄ − s⁴)/n)`.
    pub std_error_variance: f64,
    pub truncated: usize,
}

impl ReturnStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Undefined(format!("variance needs at least 2 samples, got {n}")));
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let (mut m2, mut m4) = (0.0, 0.0);
        for x in samples {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
        }
        let variance = m2 / (nf - 1.0);
        let pop = m2 / nf;
        m4 /= nf;
        Ok(ReturnStats {
            mean,
            variance,
            count: n,
            std_error_mean: (variance / nf).sqrt(),
            std_error_variance: ((m4 - pop * pop).max(0.0) / nf).sqrt(),
            truncated: 0,
        })
    }
}

/// Where tabular rollouts begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSpec {
    Initial,
    State(usize),
    /// Fixed state and first action.
    Pair(usize, usize),
}

/// Discounted return of one episode from `state`, taking `first` (if any)
/// and then actions from `act`. Returns `(G, truncated)`.
pub fn rollout_return<E, R, A>(
    env: &E,
    mut state: E::State,
    first: Option<usize>,
    act: &mut A,
    rng: &mut R,
) -> Result<(f64, bool)>
where
    E: Environment,
    R: Rng + ?Sized,
    A: FnMut(&E::State, &mut R) -> Result<usize>,
{
    let gamma = env.discount();
    let (mut g, mut disc) = (0.0, 1.0);
    let mut action = match first {
        Some(a) => a,
        None => act(&state, rng)?,
    };
    for _ in 0..env.max_steps() {
        let out = env.step(&state, action, rng)?;
        g += disc * out.reward;
        disc *= gamma;
        if out.done {
            return Ok((g, false));
        }
        state = out.next_state;
        action = act(&state, rng)?;
    }
    Ok((g, true))
}

/// Return statistics of `n_rollouts` episodes started by `env.reset`.
pub fn monte_carlo_return_stats<E, R, A>(env: &E, mut act: A, n_rollouts: usize, rng: &mut R) -> Result<ReturnStats>
where
    E: Environment,
    R: Rng + ?Sized,
    A: FnMut(&E::State, &mut R) -> Result<usize>,
{
    let mut returns = Vec::with_capacity(n_rollouts);
    let mut truncated = 0;
    for _ in 0..n_rollouts {
        let start = env.reset(rng);
        let (g, t) = rollout_return(env, start, None, &mut act, rng)?;
        returns.push(g);
        truncated += t as usize;
    }
    let mut stats = ReturnStats::from_samples(&returns)?;
    stats.truncated = truncated;
    Ok(stats)
}

/// Return statistics of a tabular policy from a chosen start.
pub fn tabular_return_stats<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    start: StartSpec,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<ReturnStats> {
    let mut act = |s: &usize, rng: &mut R| Ok(sample_categorical(pi.probs[*s].iter().copied(), rng));
    let mut returns = Vec::with_capacity(n_rollouts);
    let mut truncated = 0;
    for _ in 0..n_rollouts {
        let (s0, first) = match start {
            StartSpec::Initial => (mdp.reset(rng), None),
            StartSpec::State(s) => (s, None),
            StartSpec::Pair(s, a) => (s, Some(a)),
        };
        let (g, t) = rollout_return(mdp, s0, first, &mut act, rng)?;
        returns.push(g);
        truncated += t as usize;
    }
    let mut stats = ReturnStats::from_samples(&returns)?;
    stats.truncated = truncated;
    Ok(stats)
}
