use nalgebra::{DMatrix, DVector};

use super::exact::{pair_kernel, solve_q, solve_sigma_direct, solve_sigma_offpolicy, SolveOptions};
use crate::envs::TabularMdp;
use crate::policy::{PolicyTable, SoftmaxPolicy};
use crate::{Error, Result};

/// Which policy-gradient expression [`grad_j_exact`] evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum GradMode {
    OnPolicy,
    OffPolicy { behavior: PolicyTable },
}

/// `J = Σ_s d₀(s) Σ_a π(a|s) [Q_π(s,a) − ψ σ_π(s,a)]`.
pub fn objective_j(mdp: &TabularMdp, pi: &PolicyTable, psi: f64, opts: &SolveOptions) -> Result<f64> {
    let q = solve_q(mdp, pi, opts)?;
    let sigma = if psi == 0.0 { vec![0.0; q.len()] } else { solve_sigma_direct(mdp, pi, &q, opts)? };
    Ok(start_average(mdp, pi, &q, &sigma, psi))
}

/// `J = E_{s~d₀, a~b}[ρ(s,a)(Q_π − ψσ)]` with the off-policy variance.
pub fn objective_j_off(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    behavior: &PolicyTable,
    psi: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    let q = solve_q(mdp, pi, opts)?;
    let sigma = solve_sigma_offpolicy(mdp, pi, behavior, &q, opts)?;
    Ok(start_average(mdp, pi, &q, &sigma, psi))
}

fn start_average(mdp: &TabularMdp, pi: &PolicyTable, q: &[f64], sigma: &[f64], psi: f64) -> f64 {
    let na = mdp.n_actions();
    let mut j = 0.0;
    for (s, &d) in mdp.initial_dist().iter().enumerate() {
        if d == 0.0 || mdp.is_terminal(s) {
            continue;
        }
        for a in 0..na {
            let p = s * na + a;
            j += d * pi.prob(s, a) * (q[p] - psi * sigma[p]);
        }
    }
    j
}

/// `∂ log π(a|s) / ∂θ[s, b] = (1[a=b] − π(b|s)) / temp` as an `[S·A × A]`
/// matrix: row `(s,a)`, column `b`.
pub fn score_matrix(policy: &SoftmaxPolicy) -> DMatrix<f64> {
    let na = policy.n_actions();
    let ns = policy.n_features();
    let temp = policy.temperature();
    let mut m = DMatrix::zeros(ns * na, na);
    for s in 0..ns {
        let probs = policy.action_probs(&[s]);
        for a in 0..na {
            for b in 0..na {
                let ind = if a == b { 1.0 } else { 0.0 };
                m[(s * na + a, b)] = (ind - probs[b]) / temp;
            }
        }
    }
    m
}

/// Gradient of the penalized objective with respect to a one-hot softmax
/// policy's `θ`, evaluated in occupancy form.
///
/// On-policy: `Σ_k Σ_{s,a} [P_γ^(k) ∇log π Q − ψ P_γ̄^(k) ∇log π σ]`.
/// Off-policy: the same with `T = γPbρ`, `T̄ = γ̄Pbρ²`, the off-policy `σ`,
/// and the variance term weighted by `1 + 1[k ≥ 1]`.
pub fn grad_j_exact(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    psi: f64,
    mode: &GradMode,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let na = mdp.n_actions();
    let ns = mdp.n_states();
    if policy.n_features() != ns || policy.n_actions() != na {
        return Err(Error::Shape("policy does not match the MDP".into()));
    }
    let pi = policy.table();
    let gamma = mdp.discount();
    let n = mdp.n_pairs();
    let q = solve_q(mdp, &pi, opts)?;
    let k = pair_kernel(mdp, &pi);

    let mut mu0 = DVector::zeros(n);
    for (s, &d) in mdp.initial_dist().iter().enumerate() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..na {
            mu0[s * na + a] = d * pi.prob(s, a);
        }
    }
    let occupancy = |kernel: &DMatrix<f64>| -> Result<DVector<f64>> {
        let a = (DMatrix::identity(n, n) - kernel).transpose();
        a.lu().solve(&mu0).ok_or_else(|| Error::Singular("occupancy system is singular".into()))
    };
    let nu_q = occupancy(&(gamma * &k))?;

    let (nu_sigma, sigma) = match mode {
        GradMode::OnPolicy => {
            let sigma = solve_sigma_direct(mdp, &pi, &q, opts)?;
            (occupancy(&(gamma * gamma * &k))?, sigma)
        }
        GradMode::OffPolicy { behavior } => {
            let sigma = solve_sigma_offpolicy(mdp, &pi, behavior, &q, opts)?;
            let mut kbar = DMatrix::zeros(n, n);
            for s in 0..ns {
                for a in 0..na {
                    for o in mdp.outcomes(s, a) {
                        if mdp.is_terminal(s) || mdp.is_terminal(o.next) {
                            continue;
                        }
                        for b in 0..na {
                            let bp = behavior.prob(o.next, b);
                            let tp = pi.prob(o.next, b);
                            if tp > 0.0 {
                                kbar[(s * na + a, o.next * na + b)] += o.prob * tp * tp / bp;
                            }
                        }
                    }
                }
            }
            let nu_bar = occupancy(&(gamma * gamma * &kbar))?;
            (2.0 * nu_bar - &mu0, sigma)
        }
    };

    let scores = score_matrix(policy);
    let mut grad = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let p = s * na + a;
            let w = nu_q[p] * q[p] - psi * nu_sigma[p] * sigma[p];
            if w == 0.0 {
                continue;
            }
            for b in 0..na {
                grad[s * na + b] += w * scores[(p, b)];
            }
        }
    }
    Ok(grad)
}
