use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envs::TabularMdp;
use crate::policy::PolicyTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// LU factorisation of `I − cK`.
    Direct,
    /// Damped fixed-point iteration.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub method: SolveMethod,
    /// Bound on the scaled residual `‖x − b − cKx‖∞ / max(1, ‖x‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { method: SolveMethod::Direct, tol: 1e-10, max_iter: 1_000_000, damping: 1.0 }
    }
}

impl SolveOptions {
    pub fn iterative() -> Self {
        SolveOptions { method: SolveMethod::Iterative, ..Default::default() }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn scaled_residual(x: &DVector<f64>, b: &DVector<f64>, k: &DMatrix<f64>, c: f64) -> f64 {
    let r = x - b - c * (k * x);
    inf_norm(&r) / inf_norm(x).max(1.0)
}

/// Solves `x = b + c·K·x`, returning `(x, scaled residual, iterations)`.
pub(crate) fn fixed_point(
    b: &DVector<f64>,
    k: &DMatrix<f64>,
    c: f64,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, f64, usize)> {
    let n = b.len();
    match opts.method {
        SolveMethod::Direct => {
            let a = DMatrix::identity(n, n) - c * k;
            let x = a.lu().solve(b).ok_or_else(|| Error::Singular("I - cK is singular".into()))?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular("I - cK is numerically singular".into()));
            }
            let res = scaled_residual(&x, b, k, c);
            if res > opts.tol {
                return Err(Error::NotConverged { iterations: 1, residual: res });
            }
            Ok((x, res, 1))
        }
        SolveMethod::Iterative => {
            let ck = c * k;
            let mut x = b.clone();
            for it in 1..=opts.max_iter {
                let next = b + &ck * &x;
                let step = inf_norm(&(&next - &x)) / inf_norm(&next).max(1.0);
                x = (1.0 - opts.damping) * &x + opts.damping * next;
                if !step.is_finite() {
                    break;
                }
                if step <= opts.tol * 1e-2 {
                    let res = scaled_residual(&x, b, k, c);
                    if res <= opts.tol {
                        return Ok((x, res, it));
                    }
                }
            }
            Err(Error::NotConverged { iterations: opts.max_iter, residual: scaled_residual(&x, b, k, c) })
        }
    }
}

fn check_shapes(mdp: &TabularMdp, pi: &PolicyTable) -> Result<()> {
    if pi.n_states() != mdp.n_states() || pi.probs.iter().any(|p| p.len() != mdp.n_actions()) {
        return Err(Error::Shape(format!(
            "policy table is {}x?, MDP has {} states and {} actions",
            pi.n_states(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// Pair-to-pair kernel `K[(s,a),(s',a')] = P(s'|s,a)·w(s',a')` over
/// non-terminal `s'`, with `w` the next-action weight (`π`, or `π²/b`).
fn kernel_with(mdp: &TabularMdp, weight: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let na = mdp.n_actions();
    let n = mdp.n_pairs();
    let mut k = DMatrix::zeros(n, n);
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..na {
            for o in mdp.outcomes(s, a) {
                if mdp.is_terminal(o.next) {
                    continue;
                }
                for b in 0..na {
                    k[(s * na + a, o.next * na + b)] += o.prob * weight(o.next, b);
                }
            }
        }
    }
    k
}

/// `K = P Π`: probability of the next pair under `π`.
pub fn pair_kernel(mdp: &TabularMdp, pi: &PolicyTable) -> DMatrix<f64> {
    kernel_with(mdp, |s, a| pi.prob(s, a))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().fold(0.0, |r, z| r.max(z.norm()))
}

/// `Q_π` as a flat `[S × A]` vector (zero on terminal states).
pub fn solve_q(mdp: &TabularMdp, pi: &PolicyTable, opts: &SolveOptions) -> Result<Vec<f64>> {
    check_shapes(mdp, pi)?;
    let na = mdp.n_actions();
    let b = DVector::from_fn(mdp.n_pairs(), |p, _| {
        if mdp.is_terminal(p / na) {
            0.0
        } else {
            mdp.expected_reward(p / na, p % na)
        }
    });
    let (x, _, _) = fixed_point(&b, &pair_kernel(mdp, pi), mdp.discount(), opts)?;
    Ok(x.iter().copied().collect())
}

/// `E[(R + c)²]` summed over outcomes, where `c` is `bootstrap(next) − q`.
fn expected_sq(mdp: &TabularMdp, s: usize, a: usize, q_sa: f64, bootstrap: impl Fn(usize) -> Vec<(f64, f64)>) -> f64 {
    let mut total = 0.0;
    for o in mdp.outcomes(s, a) {
        let mean = o.reward.mean();
        let var = o.reward.variance();
        if mdp.is_terminal(o.next) {
            let c = mean - q_sa;
            total += o.prob * (var + c * c);
        } else {
            for (w, boot) in bootstrap(o.next) {
                let c = mean + boot - q_sa;
                total += o.prob * w * (var + c * c);
            }
        }
    }
    total
}

/// Direct variance `σ = E[δ²] + γ² E[σ(s',a')]`, with `δ` built from `q`.
pub fn solve_sigma_direct(mdp: &TabularMdp, pi: &PolicyTable, q: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    check_shapes(mdp, pi)?;
    let na = mdp.n_actions();
    let gamma = mdp.discount();
    if q.len() != mdp.n_pairs() {
        return Err(Error::Shape(format!("q has {} entries, expected {}", q.len(), mdp.n_pairs())));
    }
    let b = DVector::from_fn(mdp.n_pairs(), |p, _| {
        let (s, a) = (p / na, p % na);
        if mdp.is_terminal(s) {
            return 0.0;
        }
        expected_sq(mdp, s, a, q[p], |s2| (0..na).map(|b| (pi.prob(s2, b), gamma * q[s2 * na + b])).collect())
    });
    let (x, _, _) = fixed_point(&b, &pair_kernel(mdp, pi), gamma * gamma, opts)?;
    Ok(x.iter().copied().collect())
}

/// Off-policy variance `σ = E_b[δ² + γ̄ρ'²σ(s',a')]` with
/// `δ = R + γρ'q(s',a') − q(s,a)`. Fails when `γ̄·P·(π²/b)` does not contract.
pub fn solve_sigma_offpolicy(
    mdp: &TabularMdp,
    target: &PolicyTable,
    behavior: &PolicyTable,
    q: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    check_shapes(mdp, target)?;
    check_shapes(mdp, behavior)?;
    let na = mdp.n_actions();
    let gamma = mdp.discount();
    let mut ratio = vec![0.0; mdp.n_pairs()];
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..na {
            ratio[s * na + a] = crate::policy::importance_ratio(target.prob(s, a), behavior.prob(s, a), s, a)?;
        }
    }
    let k = kernel_with(mdp, |s, a| behavior.prob(s, a) * ratio[s * na + a] * ratio[s * na + a]);
    let radius = gamma * gamma * spectral_radius(&k);
    if radius >= 1.0 {
        return Err(Error::NotContracting { radius });
    }
    let b = DVector::from_fn(mdp.n_pairs(), |p, _| {
        let (s, a) = (p / na, p % na);
        if mdp.is_terminal(s) {
            return 0.0;
        }
        expected_sq(mdp, s, a, q[p], |s2| {
            (0..na).map(|b| (behavior.prob(s2, b), gamma * ratio[s2 * na + b] * q[s2 * na + b])).collect()
        })
    });
    let (x, _, _) = fixed_point(&b, &k, gamma * gamma, opts)?;
    Ok(x.iter().copied().collect())
}

/// Second moment `M(s,a) = E[R² + 2γR·V(s') + γ²M(s',a')]` given state
/// values `v`.
pub fn solve_second_moment(mdp: &TabularMdp, pi: &PolicyTable, v: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    check_shapes(mdp, pi)?;
    let na = mdp.n_actions();
    let gamma = mdp.discount();
    let b = DVector::from_fn(mdp.n_pairs(), |p, _| {
        let (s, a) = (p / na, p % na);
        if mdp.is_terminal(s) {
            return 0.0;
        }
        mdp.outcomes(s, a)
            .iter()
            .map(|o| {
                let v_next = if mdp.is_terminal(o.next) { 0.0 } else { v[o.next] };
                o.prob * (o.reward.second_moment() + 2.0 * gamma * o.reward.mean() * v_next)
            })
            .sum()
    });
    let (x, _, _) = fixed_point(&b, &pair_kernel(mdp, pi), gamma * gamma, opts)?;
    Ok(x.iter().copied().collect())
}

/// `Σ_a π(a|s)·table(s,a)` for every state.
pub fn state_values(pi: &PolicyTable, table: &[f64]) -> Vec<f64> {
    let na = pi.probs.first().map_or(0, Vec::len);
    pi.probs.iter().enumerate().map(|(s, p)| (0..na).map(|a| p[a] * table[s * na + a]).sum()).collect()
}

/// Exact `Q_π`, `σ_π`, `M`, `V_π` of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub n_actions: usize,
    pub q: Vec<f64>,
    pub sigma: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Largest scaled residual over the three linear systems.
    pub residual: f64,
    pub iterations: usize,
}

impl ExactSolution {
    pub fn compute(mdp: &TabularMdp, pi: &PolicyTable, opts: &SolveOptions) -> Result<Self> {
        check_shapes(mdp, pi)?;
        let na = mdp.n_actions();
        let gamma = mdp.discount();
        let k = pair_kernel(mdp, pi);
        let reward = DVector::from_fn(mdp.n_pairs(), |p, _| {
            if mdp.is_terminal(p / na) {
                0.0
            } else {
                mdp.expected_reward(p / na, p % na)
            }
        });
        let (q, r1, i1) = fixed_point(&reward, &k, gamma, opts)?;
        let q: Vec<f64> = q.iter().copied().collect();
        let v = state_values(pi, &q);
        let sigma = solve_sigma_direct(mdp, pi, &q, opts)?;
        let m = solve_second_moment(mdp, pi, &v, opts)?;
        Ok(ExactSolution { n_actions: na, q, sigma, m, v, residual: r1, iterations: i1 })
    }

    /// `Var(G | s)` from the direct critic: `Σ_a π[σ + (Q − V)²]`.
    pub fn state_variance_direct(&self, pi: &PolicyTable) -> Vec<f64> {
        let na = self.n_actions;
        (0..self.v.len())
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let p = s * na + a;
                        let d = self.q[p] - self.v[s];
                        pi.prob(s, a) * (self.sigma[p] + d * d)
                    })
                    .sum()
            })
            .collect()
    }

    /// `Var(G | s) = M(s) − V(s)²` from the second moment.
    pub fn state_variance_indirect(&self, pi: &PolicyTable) -> Vec<f64> {
        let m_state = state_values(pi, &self.m);
        m_state.iter().zip(&self.v).map(|(m, v)| m - v * v).collect()
    }
}
