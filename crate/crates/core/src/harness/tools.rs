use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::config::BuiltEnv;
use super::sweep::fmt_f64;
use crate::envs::{sample_categorical, Environment, TabularMdp};
use crate::features::FeatureMap;
use crate::oracle::{
    grad_j_exact, monte_carlo_return_stats, objective_j, sharpe, ExactSolution, GradMode, ReturnStats, SolveOptions,
};
use crate::policy::{PolicyTable, SoftmaxPolicy};
use crate::{Error, Result};

/// Rollouts used for return statistics.
pub const DEFAULT_EVAL_ROLLOUTS: usize = 800;
/// Trajectories used for state-visitation maps.
pub const DEFAULT_VISITATION_ROLLOUTS: usize = 10_000;

/// Errors unless `policy` has the feature and action counts of `env`.
pub fn check_shape(env: &BuiltEnv, policy: &SoftmaxPolicy) -> Result<()> {
    if policy.n_features() != env.n_features() || policy.n_actions() != env.n_actions() {
        return Err(Error::Shape(format!(
            "policy is {}x{} but environment needs {}x{}",
            policy.n_features(),
            policy.n_actions(),
            env.n_features(),
            env.n_actions()
        )));
    }
    Ok(())
}

/// Monte-Carlo return statistics of `policy` from the initial distribution.
pub fn evaluate_agent<R: Rng + ?Sized>(
    env: &BuiltEnv,
    policy: &SoftmaxPolicy,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<ReturnStats> {
    check_shape(env, policy)?;
    match env {
        BuiltEnv::Tabular(mdp) => {
            let pi = policy.table();
            monte_carlo_return_stats(
                mdp,
                |s: &usize, r: &mut R| Ok(sample_categorical(pi.probs[*s].iter().copied(), r)),
                n_rollouts,
                rng,
            )
        }
        BuiltEnv::Continuous { world, tiles } => {
            let mut active = Vec::with_capacity(tiles.n_tilings);
            monte_carlo_return_stats(
                world,
                |s: &[f64; 2], r: &mut R| {
                    tiles.active_into(s, &mut active)?;
                    Ok(policy.sample(&active, r))
                },
                n_rollouts,
                rng,
            )
        }
    }
}

/// Writes one evaluation row.
pub fn write_eval_csv(path: &Path, run_id: &str, stats: &ReturnStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "rollouts", "mean", "variance", "sharpe", "se_mean", "se_variance", "truncated"])?;
    w.write_record([
        run_id.to_string(),
        stats.count.to_string(),
        fmt_f64(stats.mean),
        fmt_f64(stats.variance),
        sharpe(stats).map(fmt_f64).unwrap_or_default(),
        fmt_f64(stats.std_error_mean),
        fmt_f64(stats.std_error_variance),
        stats.truncated.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Visit counts per state over a batch of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Visitation {
    pub counts: Vec<u64>,
    pub total: u64,
    /// Visits to risky cells; `None` without a grid layout.
    pub risky: Option<u64>,
    pub trajectories: usize,
}

impl Visitation {
    pub fn frequency(&self, s: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[s] as f64 / self.total as f64
        }
    }

    /// Share of all visits that land on risky cells.
    pub fn risky_frequency(&self) -> Option<f64> {
        self.risky.map(|r| if self.total == 0 { 0.0 } else { r as f64 / self.total as f64 })
    }
}

/// Rolls out `pi` from the initial distribution `n_rollouts` times and
/// counts every visited state, terminal states included.
pub fn risky_visitation<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<Visitation> {
    if pi.n_states() != mdp.n_states() {
        return Err(Error::Shape(format!("policy covers {} states, MDP has {}", pi.n_states(), mdp.n_states())));
    }
    let mut counts = vec![0u64; mdp.n_states()];
    for _ in 0..n_rollouts {
        let mut s = mdp.reset(rng);
        counts[s] += 1;
        for _ in 0..mdp.max_steps() {
            let a = sample_categorical(pi.probs[s].iter().copied(), rng);
            let out = mdp.step(&s, a, rng)?;
            s = out.next_state;
            counts[s] += 1;
            if out.done {
                break;
            }
        }
    }
    let total = counts.iter().sum();
    let risky = mdp.layout().map(|l| counts.iter().zip(&l.risky).filter(|(_, &r)| r).map(|(c, _)| c).sum());
    Ok(Visitation { counts, total, risky, trajectories: n_rollouts })
}

/// Visitation map of a trained agent; errors for continuous worlds.
pub fn visitation_for<'e, R: Rng + ?Sized>(
    env: &'e BuiltEnv,
    policy: &SoftmaxPolicy,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<(Visitation, Option<&'e crate::envs::GridLayout>)> {
    let mdp = env.tabular().map_err(|_| {
        Error::Undefined("visitation needs a tabular environment; continuous worlds have no cell grid".into())
    })?;
    check_shape(env, policy)?;
    Ok((risky_visitation(mdp, &policy.table(), n_rollouts, rng)?, mdp.layout()))
}

/// Per-cell CSV followed by an aggregate row with state `risky`.
pub fn write_visitation_csv(path: &Path, vis: &Visitation, layout: Option<&crate::envs::GridLayout>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "row", "col", "risky", "count", "frequency"])?;
    for (s, &c) in vis.counts.iter().enumerate() {
        let (row, col, risky) = match layout.and_then(|l| l.cells.get(s).map(|rc| (rc, l.risky[s]))) {
            Some((&(r, c), k)) => (r.to_string(), c.to_string(), (k as u8).to_string()),
            None => Default::default(),
        };
        w.write_record([s.to_string(), row, col, risky, c.to_string(), fmt_f64(vis.frequency(s))])?;
    }
    if let (Some(r), Some(f)) = (vis.risky, vis.risky_frequency()) {
        w.write_record(["risky".to_string(), String::new(), String::new(), "1".into(), r.to_string(), fmt_f64(f)])?;
    }
    w.flush()?;
    Ok(())
}

/// Exact tables of a policy plus objective diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDump {
    pub solution: ExactSolution,
    pub pi: PolicyTable,
    pub psi: f64,
    pub j: f64,
    pub grad_norm: f64,
}

pub fn oracle_dump(mdp: &TabularMdp, policy: &SoftmaxPolicy, psi: f64, opts: &SolveOptions) -> Result<OracleDump> {
    if policy.n_features() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Shape("policy does not match the MDP".into()));
    }
    let pi = policy.table();
    let solution = ExactSolution::compute(mdp, &pi, opts)?;
    let j = objective_j(mdp, &pi, psi, opts)?;
    let grad = grad_j_exact(mdp, policy, psi, &GradMode::OnPolicy, opts)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok(OracleDump { solution, pi, psi, j, grad_norm })
}

/// One row per `(state, action)`; `j` and `grad_norm` repeat on every row.
pub fn write_oracle_csv(path: &Path, dump: &OracleDump) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "action", "pi", "q", "sigma", "m", "v", "psi", "j", "grad_norm"])?;
    let sol = &dump.solution;
    let na = sol.n_actions;
    for (i, q) in sol.q.iter().enumerate() {
        let (s, a) = (i / na, i % na);
        w.write_record([
            s.to_string(),
            a.to_string(),
            fmt_f64(dump.pi.prob(s, a)),
            fmt_f64(*q),
            fmt_f64(sol.sigma[i]),
            fmt_f64(sol.m[i]),
            fmt_f64(sol.v[s]),
            fmt_f64(dump.psi),
            fmt_f64(dump.j),
            fmt_f64(dump.grad_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}
