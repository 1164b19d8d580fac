//! Exit criteria. Each test prints one `[criterion N] PASS|FAIL` line with the
//! measured quantity and its pinned threshold, then asserts the verdict.

use std::path::Path;

use rand::Rng;
use riskac::algos::{run_episode, Agent, Algo, AlgoConfig};
use riskac::critic::StepSizes;
use riskac::envs::{four_rooms, sample_categorical, Environment, FourRoomsOptions, TabularMdp};
use riskac::features::OneHot;
use riskac::harness::{run_sweep, ExperimentConfig, RunResult};
use riskac::oracle::{
    gae, gae_direct, grad_j_exact, objective_j, objective_j_off, solve_q, solve_sigma_direct, solve_sigma_offpolicy,
    tabular_return_stats, ExactSolution, GradMode, SolveOptions, StartSpec,
};
use riskac::policy::{BehaviorPolicy, Correction, PolicyTable, SoftmaxPolicy};
use riskac::rng::{derive_seed, rng_from_seed};
use riskac_validation::*;

const DISCOUNTS: [f64; 3] = [0.5, 0.9, 0.99];

// ---------------------------------------------------------------- criterion 1

const C1_INSTANCES: u64 = 50;
const C1_ROLLOUTS: usize = 1_000_000;
const C1_Z: f64 = 4.0;
const C1_INDIRECT_TOL: f64 = 1e-7;
const C1_OFFPOLICY_TOL: f64 = 1e-8;
const C1_BEHAVIORS: u64 = 5;

fn c1_instance(i: u64) -> (TabularMdp, PolicyTable) {
    let mdp = random_instance(1000 + i, 10, 4, DISCOUNTS[i as usize % 3]);
    let pi = random_policy(&mdp, 2000 + i, 1.0).table();
    (mdp, pi)
}

#[test]
fn criterion_1a_variance_matches_monte_carlo() {
    let opts = SolveOptions::default();
    let (mut worst, mut worst_at, mut truncated, mut pairs) = (0.0f64, (0, 0), 0, 0);
    for i in 0..C1_INSTANCES {
        let (mdp, pi) = c1_instance(i);
        let q = solve_q(&mdp, &pi, &opts).unwrap();
        let sigma = solve_sigma_direct(&mdp, &pi, &q, &opts).unwrap();
        let na = mdp.n_actions();
        let live: Vec<usize> = (0..mdp.n_pairs()).filter(|p| !mdp.is_terminal(p / na)).collect();
        let per_pair = C1_ROLLOUTS / live.len();
        let mut rng = rng_from_seed(derive_seed(11, i));
        for &p in &live {
            let st = tabular_return_stats(&mdp, &pi, StartSpec::Pair(p / na, p % na), per_pair, &mut rng).unwrap();
            truncated += st.truncated;
            pairs += 1;
            let z = (st.variance - sigma[p]).abs() / st.std_error_variance.max(f64::MIN_POSITIVE);
            if z > worst {
                worst = z;
                worst_at = (i, p);
            }
        }
    }
    let pass = worst <= C1_Z && truncated == 0;
    verdict(
        "1a",
        pass,
        format_args!(
            "direct variance vs Monte-Carlo Var(G): max |z| = {worst:.3} (instance {}, pair {}) over {pairs} pairs, \
             {C1_ROLLOUTS} rollouts per MDP, threshold {C1_Z}, truncated rollouts {truncated}",
            worst_at.0, worst_at.1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_1b_direct_matches_indirect() {
    let opts = SolveOptions::default();
    let (mut state_err, mut pair_err) = (0.0f64, 0.0f64);
    for i in 0..C1_INSTANCES {
        let (mdp, pi) = c1_instance(i);
        let sol = ExactSolution::compute(&mdp, &pi, &opts).unwrap();
        state_err = state_err.max(max_abs_diff(&sol.state_variance_direct(&pi), &sol.state_variance_indirect(&pi)));
        let from_m: Vec<f64> = sol.m.iter().zip(&sol.q).map(|(m, q)| m - q * q).collect();
        pair_err = pair_err.max(max_abs_diff(&sol.sigma, &from_m));
    }
    let pass = state_err <= C1_INDIRECT_TOL;
    verdict(
        "1b",
        pass,
        format_args!(
            "state variance direct vs M - V^2: max diff {state_err:.3e} (pairwise M - Q^2: {pair_err:.3e}), \
             tolerance {C1_INDIRECT_TOL:e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_1c_offpolicy_variance_matches_direct() {
    let opts = SolveOptions::default();
    let (mut worst, mut errors, mut checked) = (0.0f64, 0, 0);
    for i in 0..C1_INSTANCES {
        let (mdp, pi) = c1_instance(i);
        let q = solve_q(&mdp, &pi, &opts).unwrap();
        let direct = solve_sigma_direct(&mdp, &pi, &q, &opts).unwrap();
        for k in 0..C1_BEHAVIORS {
            let b = random_behavior(&mdp, derive_seed(3000 + i, k));
            checked += 1;
            match solve_sigma_offpolicy(&mdp, &pi, &b, &q, &opts) {
                Ok(off) => worst = worst.max(max_abs_diff(&off, &direct)),
                Err(_) => errors += 1,
            }
        }
    }
    // What the off-policy solver does match: the variance of the
    // importance-weighted return.
    let mut z_weighted = 0.0f64;
    for i in 0..3 {
        let (mdp, pi) = c1_instance(i);
        let q = solve_q(&mdp, &pi, &opts).unwrap();
        let b = mixed_behavior(&pi, 0.3);
        let Ok(off) = solve_sigma_offpolicy(&mdp, &pi, &b, &q, &opts) else { continue };
        let na = mdp.n_actions();
        let mut rng = rng_from_seed(derive_seed(12, i));
        for p in (0..mdp.n_pairs()).filter(|p| !mdp.is_terminal(p / na)) {
            let xs: Vec<f64> = (0..20_000).map(|_| weighted_return(&mdp, &pi, &b, p / na, p % na, &mut rng)).collect();
            let st = riskac::oracle::ReturnStats::from_samples(&xs).unwrap();
            z_weighted = z_weighted.max((st.variance - off[p]).abs() / st.std_error_variance);
        }
    }
    report!("[info] off-policy variance vs Monte-Carlo variance of the importance-weighted return: max |z| = {z_weighted:.3}");
    let pass = worst <= C1_OFFPOLICY_TOL && errors == 0;
    verdict(
        "1c",
        pass,
        format_args!(
            "off-policy variance vs on-policy direct variance over {checked} (MDP, behavior) pairs: \
             max diff {worst:.3e}, solver errors {errors}, tolerance {C1_OFFPOLICY_TOL:e}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 2

const C2_INSTANCES: u64 = 20;
const C2_PSI: [f64; 3] = [0.0, 0.1, 1.0];
const C2_TOL: f64 = 1e-5;
const C2_STEP: f64 = 1e-5;

fn central_difference(policy: &SoftmaxPolicy, f: impl Fn(&PolicyTable) -> f64) -> Vec<f64> {
    (0..policy.theta().len())
        .map(|i| {
            let mut plus = policy.clone();
            plus.theta_mut()[i] += C2_STEP;
            let mut minus = policy.clone();
            minus.theta_mut()[i] -= C2_STEP;
            (f(&plus.table()) - f(&minus.table())) / (2.0 * C2_STEP)
        })
        .collect()
}

fn relative_error(exact: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    max_abs_diff(exact, numeric) / scale
}

/// `∂Q/∂θ` by central differences of the exact solver, as `dq[j][pair]`.
fn q_jacobian(mdp: &TabularMdp, policy: &SoftmaxPolicy, h: f64) -> Vec<Vec<f64>> {
    let opts = SolveOptions::default();
    (0..policy.theta().len())
        .map(|j| {
            let mut plus = policy.clone();
            plus.theta_mut()[j] += h;
            let mut minus = policy.clone();
            minus.theta_mut()[j] -= h;
            let qp = solve_q(mdp, &plus.table(), &opts).unwrap();
            let qm = solve_q(mdp, &minus.table(), &opts).unwrap();
            qp.iter().zip(&qm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
        })
        .collect()
}

/// On-policy variance-gradient pieces the occupancy form leaves out:
/// `−ψ μ₀ᵀ(I − γ²K)⁻¹ E[2δ∇δ + δ²∇log π(A'|S')]`.
fn dropped_term(mdp: &TabularMdp, policy: &SoftmaxPolicy, psi: f64) -> Vec<f64> {
    let pi = policy.table();
    let q = solve_q(mdp, &pi, &SolveOptions::default()).unwrap();
    let dq = q_jacobian(mdp, policy, 1e-6);
    let na = mdp.n_actions();
    let gamma = mdp.discount();
    let mut mu0 = vec![0.0; mdp.n_pairs()];
    for (s, &d) in mdp.initial_dist().iter().enumerate() {
        if !mdp.is_terminal(s) {
            for a in 0..na {
                mu0[s * na + a] = d * pi.prob(s, a);
            }
        }
    }
    let k = dense_kernel(mdp, |s, a| pi.prob(s, a));
    let nu = solve_resolvent(&k.transpose(), gamma * gamma, &mu0);
    let mut out = vec![0.0; dq.len()];
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..na {
            let p = s * na + a;
            for o in mdp.outcomes(s, a) {
                if mdp.is_terminal(o.next) {
                    continue;
                }
                for a2 in 0..na {
                    let p2 = o.next * na + a2;
                    let w = nu[p] * o.prob * pi.prob(o.next, a2);
                    let delta = o.reward.mean() + gamma * q[p2] - q[p];
                    for (j, g) in out.iter_mut().enumerate() {
                        *g += w * 2.0 * delta * gamma * dq[j][p2];
                    }
                    for (j, score) in policy.grad_log_prob(&[o.next], a2) {
                        out[j] += w * delta * delta * score;
                    }
                }
            }
        }
    }
    out.iter().map(|g| -psi * g).collect()
}

#[test]
fn criterion_2_gradient_matches_finite_differences() {
    let opts = SolveOptions::default();
    let mut all_pass = true;
    let mut lines = Vec::new();
    let mut corrected_worst = 0.0f64;
    for off in [false, true] {
        // Off-policy instances need a behavior whose variance recursion
        // contracts; others have no finite objective and are skipped.
        let mut instances = Vec::new();
        let mut seed = 4000;
        let mut skipped = 0;
        while instances.len() < C2_INSTANCES as usize {
            let i = instances.len() + skipped;
            let mdp = random_instance(seed, 8, 3, DISCOUNTS[i % 3]);
            let policy = random_policy(&mdp, seed + 1000, 1.0);
            let b = random_behavior(&mdp, seed + 2000);
            seed += 1;
            if off {
                let q = solve_q(&mdp, &policy.table(), &opts).unwrap();
                if solve_sigma_offpolicy(&mdp, &policy.table(), &b, &q, &opts).is_err() {
                    skipped += 1;
                    continue;
                }
            }
            instances.push((mdp, policy, b));
        }
        for psi in C2_PSI {
            let mut worst = 0.0f64;
            for (mdp, policy, b) in &instances {
                let (exact, numeric) = if off {
                    let mode = GradMode::OffPolicy { behavior: b.clone() };
                    let g = grad_j_exact(mdp, policy, psi, &mode, &opts).unwrap();
                    (g, central_difference(policy, |pi| objective_j_off(mdp, pi, b, psi, &opts).unwrap()))
                } else {
                    let g = grad_j_exact(mdp, policy, psi, &GradMode::OnPolicy, &opts).unwrap();
                    let fd = central_difference(policy, |pi| objective_j(mdp, pi, psi, &opts).unwrap());
                    let fixed: Vec<f64> = g.iter().zip(dropped_term(mdp, policy, psi)).map(|(g, d)| g + d).collect();
                    corrected_worst = corrected_worst.max(relative_error(&fixed, &fd));
                    (g, fd)
                };
                worst = worst.max(relative_error(&exact, &numeric));
            }
            let ok = worst <= C2_TOL;
            all_pass &= ok;
            lines.push(format!(
                "{} psi={psi}: max rel err {worst:.3e}{}",
                if off { "off-policy" } else { "on-policy" },
                if off && psi == 0.0 {
                    format!(" ({skipped} non-contracting behaviors redrawn)")
                } else {
                    String::new()
                }
            ));
        }
    }
    report!(
        "[info] on-policy gradient plus the dropped 2*delta*grad(delta) and delta^2*score terms: max rel err {corrected_worst:.3e}"
    );
    verdict(
        "2",
        all_pass,
        format_args!("occupancy gradient vs central differences, tolerance {C2_TOL:e}: {}", lines.join("; ")),
    );
    assert!(all_pass);
}

// ---------------------------------------------------------------- criterion 3

const C3_EPISODES: usize = 30;

fn reference_sizes() -> StepSizes {
    StepSizes { alpha_theta: 0.01, alpha_w: 0.5, alpha_z: 0.5 }
}

fn train(mdp: &TabularMdp, cfg: &AlgoConfig, agent: &mut Agent, seed: u64) {
    let feats = OneHot { n_states: mdp.n_states() };
    let mut rng = rng_from_seed(seed);
    for _ in 0..cfg.episodes {
        run_episode(mdp, &feats, agent, cfg, &mut rng).unwrap();
    }
}

fn fresh(mdp: &TabularMdp) -> Agent {
    Agent::new(mdp.n_states(), mdp.n_actions(), 1.0).unwrap()
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn same(a: &Agent, b: &Agent, with_sigma: bool) -> bool {
    bits(a.policy.theta()) == bits(b.policy.theta())
        && bits(a.critic.q.weights()) == bits(b.critic.q.weights())
        && (!with_sigma || bits(a.critic.sigma.weights()) == bits(b.critic.sigma.weights()))
}

#[test]
fn criterion_3_degeneracy_identities() {
    let mdp = four_rooms(&FourRoomsOptions::default()).unwrap();
    let seed = 77;
    let cfg = |algo, psi| AlgoConfig::new(algo, psi, 0.99, reference_sizes(), 1.0, C3_EPISODES);

    let mut ac = fresh(&mdp);
    train(&mdp, &cfg(Algo::Ac, 0.0), &mut ac, seed);
    let mut vpac0 = fresh(&mdp);
    train(&mdp, &cfg(Algo::VpacOn, 0.0), &mut vpac0, seed);
    let i_ok = same(&ac, &vpac0, false);

    let off_cfg = |psi| {
        let mut c = cfg(Algo::VpacOff, psi);
        c.behavior = BehaviorPolicy::Target;
        c.correction = Correction::PlainIs;
        c
    };
    let mut off0 = fresh(&mdp);
    train(&mdp, &off_cfg(0.0), &mut off0, seed);
    let ii_ok = same(&vpac0, &off0, true);

    let mut on_psi = fresh(&mdp);
    train(&mdp, &cfg(Algo::VpacOn, 0.015), &mut on_psi, seed);
    let mut off_psi = fresh(&mdp);
    train(&mdp, &off_cfg(0.015), &mut off_psi, seed);
    report!(
        "[info] off-policy with b = pi at psi = 0.015 equals on-policy bitwise: {} (the off-policy actor doubles psi after the first step)",
        same(&on_psi, &off_psi, true)
    );

    // μ = 0: the actor must ignore the second-moment critic and the start
    // value entirely, leaving only the Q-weighted score.
    let mut iii_ok = true;
    let mut iii_detail = Vec::new();
    for algo in [Algo::Vaac, Algo::VaacTd] {
        let mut c = cfg(algo, 0.0);
        if algo == Algo::Vaac {
            c.step_sizes = StepSizes { alpha_theta: 0.001, alpha_w: 0.05, alpha_z: 0.005 };
        }
        let mut plain = fresh(&mdp);
        train(&mdp, &c, &mut plain, seed);
        let mut noisy = fresh(&mdp);
        let mut rng = rng_from_seed(5);
        for w in noisy.critic.sigma.weights_mut() {
            *w = rng.random_range(-100.0..100.0);
        }
        noisy.v0 = 37.0;
        train(&mdp, &c, &mut noisy, seed);
        let ok = same(&plain, &noisy, false);
        iii_ok &= ok;
        iii_detail.push(format!("{algo} actor independent of second-moment critic: {ok}"));
    }
    let mut td0 = fresh(&mdp);
    train(&mdp, &cfg(Algo::VaacTd, 0.0), &mut td0, seed);
    let td_ac = same(&ac, &td0, false);
    iii_ok &= td_ac;
    iii_detail.push(format!("VAAC_TD equals AC bitwise: {td_ac}"));

    let pass = i_ok && ii_ok && iii_ok;
    verdict(
        "3",
        pass,
        format_args!(
            "exact equality after {C3_EPISODES} four-rooms episodes: (i) VPAC_ON psi=0 == AC: {i_ok}; \
             (ii) VPAC_OFF b=pi plain IS == VPAC_ON (psi=0): {ii_ok}; (iii) {}",
            iii_detail.join(", ")
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 4

const C4_MDPS: u64 = 5;
const C4_TRANSITIONS: usize = 1_000_000;
const C4_Z: f64 = 4.0;
const C4_FD_STEP: f64 = 1e-6;

struct TdFixture {
    mdp: TabularMdp,
    policy: SoftmaxPolicy,
    pi: PolicyTable,
    b: PolicyTable,
    q: Vec<f64>,
    /// `∂Q/∂θ_j` stored as `dq[j][pair]`.
    dq: Vec<Vec<f64>>,
}

impl TdFixture {
    fn new(i: u64) -> Self {
        let mdp = random_instance(7000 + i, 6, 3, 0.9);
        let policy = random_policy(&mdp, 7100 + i, 1.0);
        let pi = policy.table();
        let b = random_behavior(&mdp, 7200 + i);
        let opts = SolveOptions::default();
        let q = solve_q(&mdp, &pi, &opts).unwrap();
        let dq = q_jacobian(&mdp, &policy, C4_FD_STEP);
        TdFixture { mdp, policy, pi, b, q, dq }
    }

    fn ratio(&self, s: usize, a: usize) -> f64 {
        self.pi.prob(s, a) / self.b.prob(s, a)
    }
}

fn z_score(xs: &[f64]) -> f64 {
    let (m, se) = mean_se(xs);
    if se == 0.0 {
        if m == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        m.abs() / se
    }
}

#[test]
fn criterion_4_td_expectations_monte_carlo() {
    let (mut worst_cross, mut worst_grad) = (0.0f64, 0.0f64);
    let mut grad_detail = Vec::new();
    for i in 0..C4_MDPS {
        let fx = TdFixture::new(i);
        let mdp = &fx.mdp;
        let na = mdp.n_actions();
        let gamma = mdp.discount();
        let live: Vec<usize> = (0..mdp.n_pairs()).filter(|p| !mdp.is_terminal(p / na)).collect();
        let n_theta = fx.policy.theta().len();
        let mut cross = Vec::with_capacity(C4_TRANSITIONS);
        let mut grads = vec![Vec::with_capacity(C4_TRANSITIONS); n_theta];
        let mut rng = rng_from_seed(derive_seed(44, i));
        for _ in 0..C4_TRANSITIONS {
            let p = live[rng.random_range(0..live.len())];
            let (s, a) = (p / na, p % na);
            let out = mdp.step(&s, a, &mut rng).unwrap();
            if out.done {
                let delta = out.reward - fx.q[p];
                cross.push(0.0);
                for (j, g) in grads.iter_mut().enumerate() {
                    g.push(delta * -fx.dq[j][p]);
                }
                continue;
            }
            let s2 = out.next_state;
            let a2 = sample_categorical(fx.b.probs[s2].iter().copied(), &mut rng);
            let p2 = s2 * na + a2;
            let rho = fx.ratio(s2, a2);
            let delta = out.reward + gamma * rho * fx.q[p2] - fx.q[p];
            let g_next = weighted_return(mdp, &fx.pi, &fx.b, s2, a2, &mut rng);
            cross.push(gamma * delta * rho * (g_next - fx.q[p2]));
            let score = fx.policy.grad_log_prob(&[s2], a2);
            let mut d_rho = vec![0.0; n_theta];
            for (k, v) in score {
                d_rho[k] = rho * v;
            }
            for (j, g) in grads.iter_mut().enumerate() {
                let d_delta = gamma * (d_rho[j] * fx.q[p2] + rho * fx.dq[j][p2]) - fx.dq[j][p];
                g.push(delta * d_delta);
            }
        }
        worst_cross = worst_cross.max(z_score(&cross));
        let zg = grads.iter().map(|g| z_score(g)).fold(0.0, f64::max);
        grad_detail.push(format!("{zg:.1}"));
        worst_grad = worst_grad.max(zg);
    }
    let cross_ok = worst_cross <= C4_Z;
    let grad_ok = worst_grad <= C4_Z;
    let pass = cross_ok && grad_ok;
    verdict(
        "4",
        pass,
        format_args!(
            "{C4_TRANSITIONS} transitions on {C4_MDPS} MDPs, threshold {C4_Z} SE: cross term max |z| = {worst_cross:.3} ({}); \
             delta*grad(delta) max |z| over components = {worst_grad:.3} ({}; per MDP [{}])",
            if cross_ok { "ok" } else { "exceeds" },
            if grad_ok { "ok" } else { "exceeds" },
            grad_detail.join(", ")
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 5

const C5_INSTANCES: u64 = 20;
const C5_EPS: [f64; 2] = [0.01, 0.1];
const C5_FACTOR: f64 = 3.0;
const C5_BEHAVIOR_MIX: f64 = 0.3;

/// Exact pieces of the estimation-error decomposition for one perturbation
/// direction `u` (zero on terminal pairs).
struct ErrorModel<'a> {
    mdp: &'a TabularMdp,
    pi: &'a PolicyTable,
    b: &'a PolicyTable,
    q: Vec<f64>,
    sigma: Vec<f64>,
    u: Vec<f64>,
    off: bool,
}

impl ErrorModel<'_> {
    fn ratio(&self, s: usize, a: usize) -> f64 {
        self.pi.prob(s, a) / self.b.prob(s, a)
    }

    /// `(I − γ²K̄)⁻¹ c` with `c = −γ E_b[δ̂ ρ' e']` and `K̄ = P π²/b`.
    fn accumulated(&self, t: f64) -> Vec<f64> {
        let mdp = self.mdp;
        let na = mdp.n_actions();
        let gamma = mdp.discount();
        let qh: Vec<f64> = self.q.iter().zip(&self.u).map(|(q, u)| q + t * u).collect();
        let mut c = vec![0.0; mdp.n_pairs()];
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                let p = s * na + a;
                for o in mdp.outcomes(s, a) {
                    if mdp.is_terminal(o.next) {
                        continue;
                    }
                    for a2 in 0..na {
                        let p2 = o.next * na + a2;
                        let rho = self.ratio(o.next, a2);
                        let dh = o.reward.mean() + gamma * rho * qh[p2] - qh[p];
                        c[p] -= gamma * o.prob * self.b.prob(o.next, a2) * dh * rho * t * self.u[p2];
                    }
                }
            }
        }
        let k = dense_kernel(mdp, |s, a| self.pi.prob(s, a) * self.ratio(s, a));
        solve_resolvent(&k, gamma * gamma, &c)
    }

    fn sigma_hat(&self, t: f64) -> Vec<f64> {
        let qh: Vec<f64> = self.q.iter().zip(&self.u).map(|(q, u)| q + t * u).collect();
        let opts = SolveOptions::default();
        if self.off {
            solve_sigma_offpolicy(self.mdp, self.pi, self.b, &qh, &opts).unwrap()
        } else {
            solve_sigma_direct(self.mdp, self.pi, &qh, &opts).unwrap()
        }
    }

    fn error(&self, t: f64) -> f64 {
        max_abs_diff(&self.sigma_hat(t), &self.sigma)
    }

    /// `σ − σ̂ − (2·Acc − e²)`, which vanishes identically.
    fn identity_residual(&self, t: f64) -> f64 {
        let acc = self.accumulated(t);
        let sh = self.sigma_hat(t);
        (0..self.q.len())
            .map(|p| (self.sigma[p] - sh[p] - (2.0 * acc[p] - (t * self.u[p]).powi(2))).abs())
            .fold(0.0, f64::max)
    }
}

#[test]
fn criterion_5_variance_error_bounds() {
    let opts = SolveOptions::default();
    let (mut worst_ratio, mut worst_identity, mut min_t_frac) = (0.0f64, 0.0f64, 1.0f64);
    let (mut literal_viol, mut literal_total, mut literal_worst) = (0, 0, 0.0f64);
    let mut skipped = 0;
    for i in 0..C5_INSTANCES {
        let mdp = random_instance(8000 + i, 10, 4, DISCOUNTS[i as usize % 3]);
        let pi = random_policy(&mdp, 8100 + i, 1.0).table();
        let q = solve_q(&mdp, &pi, &opts).unwrap();
        let na = mdp.n_actions();
        let mut rng = rng_from_seed(8200 + i);
        let mut u: Vec<f64> = (0..mdp.n_pairs())
            .map(|p| if mdp.is_terminal(p / na) { 0.0 } else { rng.random_range(-1.0..=1.0) })
            .collect();
        let top = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        u.iter_mut().for_each(|v| *v /= top);
        for off in [false, true] {
            let b = if off { mixed_behavior(&pi, C5_BEHAVIOR_MIX) } else { pi.clone() };
            let sigma = if off {
                match solve_sigma_offpolicy(&mdp, &pi, &b, &q, &opts) {
                    Ok(s) => s,
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                }
            } else {
                solve_sigma_direct(&mdp, &pi, &q, &opts).unwrap()
            };
            let model = ErrorModel { mdp: &mdp, pi: &pi, b: &b, q: q.clone(), sigma, u: u.clone(), off };
            for eps in C5_EPS {
                let root = eps.sqrt();
                // Largest planted scale meeting both |e| <= sqrt(eps) and |Acc| <= eps.
                let mut t = root;
                while model.accumulated(t).iter().fold(0.0f64, |m, v| m.max(v.abs())) > eps {
                    t *= 0.98;
                }
                min_t_frac = min_t_frac.min(t / root);
                worst_ratio = worst_ratio.max(model.error(t) / eps);
                worst_identity = worst_identity.max(model.identity_residual(t));
                let lit = model.error(root);
                literal_total += 1;
                literal_worst = literal_worst.max(lit / eps);
                if lit > C5_FACTOR * eps {
                    literal_viol += 1;
                }
            }
        }
    }
    report!(
        "[info] unconstrained perturbations at |e| = sqrt(eps): {literal_viol}/{literal_total} exceed {C5_FACTOR} eps, \
         worst error {literal_worst:.2} eps"
    );
    let pass = worst_ratio <= C5_FACTOR && skipped == 0;
    verdict(
        "5",
        pass,
        format_args!(
            "{C5_INSTANCES} MDPs x on/off-policy x eps in {C5_EPS:?}, perturbations with |e| <= sqrt(eps) and \
             accumulated error <= eps: max |sigma_hat - sigma| = {worst_ratio:.3} eps (bound {C5_FACTOR} eps), \
             smallest scale used {min_t_frac:.3} sqrt(eps), decomposition residual {worst_identity:.2e}, \
             non-contracting off-policy instances {skipped}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 6

const C6_SEEDS: usize = 30;
const C6_MEAN_TOL: f64 = 0.10;
const C6_VARIANCE_RATIO: f64 = 0.60;
const C6_VISIT_RATIO: f64 = 0.50;

const C6_CONFIG: &str = r#"
name = "four_rooms_acceptance"
seeds = 30
master_seed = 2024
episodes = 1000

[env]
kind = "four_rooms"

[eval]
rollouts = 800
visitation_rollouts = 10000

[[algos]]
algo = "AC"
alpha_theta = 0.01
alpha_w = 0.5
gamma = 0.99

[[algos]]
algo = "VPAC_ON"
psi = 0.015
alpha_theta = 0.01
alpha_w = 0.5
alpha_z = 0.5
gamma = 0.99
"#;

fn by_cell(results: &[RunResult], cell: usize) -> Vec<&RunResult> {
    results.iter().filter(|r| r.cell == cell).collect()
}

fn finals(runs: &[&RunResult], f: impl Fn(&riskac::oracle::ReturnStats) -> f64) -> Vec<f64> {
    runs.iter().map(|r| f(r.final_stats.as_ref().expect("run finished"))).collect()
}

#[test]
fn criterion_6_four_rooms_reproduction() {
    let cfg = ExperimentConfig::from_toml_str(C6_CONFIG, &[]).unwrap();
    assert_eq!(cfg.seeds, C6_SEEDS);
    let results = run_sweep(&cfg, Path::new("."), 0).unwrap();
    assert!(results.iter().all(|r| r.ok()), "a run failed");
    let (ac, vpac) = (by_cell(&results, 0), by_cell(&results, 1));
    let (ac_mean, vpac_mean) = (mean(&finals(&ac, |s| s.mean)), mean(&finals(&vpac, |s| s.mean)));
    let (ac_var, vpac_var) = (median(&finals(&ac, |s| s.variance)), median(&finals(&vpac, |s| s.variance)));
    let visits = |runs: &[&RunResult]| mean(&runs.iter().map(|r| r.risky_frequency.unwrap()).collect::<Vec<_>>());
    let (ac_vis, vpac_vis) = (visits(&ac), visits(&vpac));
    let a = (vpac_mean - ac_mean).abs() <= C6_MEAN_TOL * ac_mean.abs();
    let b = vpac_var <= C6_VARIANCE_RATIO * ac_var;
    let c = vpac_vis <= C6_VISIT_RATIO * ac_vis;
    let pass = a && b && c;
    verdict(
        "6",
        pass,
        format_args!(
            "{C6_SEEDS} seeds x 1000 episodes: (a) mean return VPAC {vpac_mean:.3} vs AC {ac_mean:.3} (within {C6_MEAN_TOL}: {a}); \
             (b) median variance VPAC {vpac_var:.3} vs AC {ac_var:.3} (ratio {:.3} <= {C6_VARIANCE_RATIO}: {b}); \
             (c) frozen visitation VPAC {vpac_vis:.5} vs AC {ac_vis:.5} (ratio {:.3} <= {C6_VISIT_RATIO}: {c})",
            vpac_var / ac_var,
            vpac_vis / ac_vis
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 7

const C7_SEEDS: usize = 30;
const C7_MEAN_TOL: f64 = 0.10;
/// Risk-neutral target must reach this share of the optimal start value to
/// count as converged.
const C7_CONVERGED: f64 = 0.9;

const C7_CONFIG: &str = r#"
name = "puddle_acceptance"
seeds = 30
master_seed = 7
episodes = 2000

[env]
kind = "puddle_grid"

[eval]
rollouts = 800

[[algos]]
algo = "VPAC_OFF"
psi = [0.0, 0.002]
alpha_theta = 0.05
alpha_w = 0.5
alpha_z = 0.25
temperature = 100.0
gamma = 0.99
behavior = "uniform"
correction = "retrace"
"#;

#[test]
fn criterion_7_offpolicy_puddle_reproduction() {
    let cfg = ExperimentConfig::from_toml_str(C7_CONFIG, &[]).unwrap();
    assert_eq!(cfg.seeds, C7_SEEDS);
    let env = cfg.env.build(Path::new(".")).unwrap();
    let mdp = env.tabular().unwrap().clone();
    let results = run_sweep(&cfg, Path::new("."), 0).unwrap();
    assert!(results.iter().all(|r| r.ok()), "a run failed");
    let (ac, vpac) = (by_cell(&results, 0), by_cell(&results, 1));

    let v_star = optimal_values(&mdp, 1e-12);
    let j_star: f64 = mdp.initial_dist().iter().zip(&v_star).map(|(d, v)| d * v).sum();
    let opts = SolveOptions::default();
    let ac_j: Vec<f64> = ac.iter().map(|r| objective_j(&mdp, &r.agent.policy.table(), 0.0, &opts).unwrap()).collect();
    let ac_j_med = median(&ac_j);
    let converged = ac_j_med >= C7_CONVERGED * j_star;

    let (ac_var, vpac_var) = (median(&finals(&ac, |s| s.variance)), median(&finals(&vpac, |s| s.variance)));
    let (ac_mean, vpac_mean) = (mean(&finals(&ac, |s| s.mean)), mean(&finals(&vpac, |s| s.mean)));
    let ordered = vpac_var < ac_var;
    let close = (vpac_mean - ac_mean).abs() <= C7_MEAN_TOL * ac_mean.abs();
    let max_theta = results.iter().map(|r| r.agent.policy.max_abs_theta()).fold(0.0, f64::max);
    let pass = converged && ordered && close;
    verdict(
        "7",
        pass,
        format_args!(
            "{C7_SEEDS} seeds x {} episodes: converged (median AC target J {ac_j_med:.3} >= {C7_CONVERGED} x optimal {j_star:.3}): {converged}; \
             median variance VPAC {vpac_var:.3} < AC {ac_var:.3}: {ordered}; mean VPAC {vpac_mean:.3} vs AC {ac_mean:.3} \
             within {C7_MEAN_TOL}: {close}; max |theta| {max_theta:.3}",
            cfg.episodes
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 8

const C8_TOL: f64 = 1e-12;

#[test]
fn criterion_8_gae() {
    let mut rng = rng_from_seed(88);
    let mut lambda0 = true;
    let mut recursion_err = 0.0f64;
    for _ in 0..200 {
        let len = rng.random_range(1..300);
        let deltas: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gamma = rng.random_range(0.0..1.0);
        lambda0 &= bits(&gae(&deltas, gamma, 0.0)) == bits(&deltas);
        let lambda = rng.random_range(0.0..=1.0);
        recursion_err =
            recursion_err.max(max_abs_diff(&gae(&deltas, gamma, lambda), &gae_direct(&deltas, gamma, lambda)));
    }

    // Dyadic rewards and values with γ = 1/2 keep every sum exact, so the
    // λ = 1 estimate must equal the Monte-Carlo return minus the baseline.
    let mut lambda1 = true;
    for _ in 0..200 {
        let len = rng.random_range(1..40);
        let gamma = 0.5;
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-64i32..64) as f64).collect();
        let values: Vec<f64> =
            (0..=len).map(|t| if t == len { 0.0 } else { rng.random_range(-64i32..64) as f64 }).collect();
        let deltas: Vec<f64> = (0..len).map(|t| rewards[t] + gamma * values[t + 1] - values[t]).collect();
        let adv = gae(&deltas, gamma, 1.0);
        for t in 0..len {
            let mut ret = 0.0;
            for k in (t..len).rev() {
                ret = rewards[k] + gamma * ret;
            }
            lambda1 &= adv[t] == ret - values[t];
        }
    }
    let pass = lambda0 && lambda1 && recursion_err <= C8_TOL;
    verdict(
        "8",
        pass,
        format_args!(
            "lambda=0 equals TD errors exactly: {lambda0}; lambda=1 equals return minus baseline exactly: {lambda1}; \
             backward recursion vs direct sum max diff {recursion_err:.3e} (tolerance {C8_TOL:e})"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_excluded() {
    report!(
        "[criterion 9] EXCLUDED continuous-control benchmark numbers need a PPO agent and a physics simulator; \
         covered instead by criteria 1-8"
    );
}
