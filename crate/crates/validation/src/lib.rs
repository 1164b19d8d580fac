//! Shared fixtures for the acceptance suite: instance generators, verdict
//! lines and small independent reference computations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use riskac::envs::{random_mdp, sample_categorical, Environment, RandomMdpSpec, TabularMdp};
use riskac::policy::{PolicyTable, SoftmaxPolicy};
use riskac::rng::rng_from_seed;

/// Writes a line to the process stdout, bypassing the test harness capture
/// so passing criteria are reported too.
pub fn report_line(line: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

/// `println!` that is never captured by the test harness.
#[macro_export]
macro_rules! report {
    ($($arg:tt)*) => {
        $crate::report_line(format_args!($($arg)*))
    };
}

/// Prints one verdict line and returns whether it passed.
pub fn verdict(id: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    report_line(format_args!("[criterion {id}] {} {detail}", if pass { "PASS" } else { "FAIL" }));
    pass
}

/// Random MDP with at most `max_states` states (terminal included) and at
/// most `max_actions` actions.
pub fn random_instance(seed: u64, max_states: usize, max_actions: usize, discount: f64) -> TabularMdp {
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let spec = RandomMdpSpec {
        n_states: rng.random_range(2..max_states),
        n_actions: rng.random_range(2..=max_actions),
        branching: rng.random_range(1..=3),
        discount,
        ..RandomMdpSpec::default()
    };
    random_mdp(&spec, seed).expect("valid random MDP")
}

/// Softmax policy over one-hot states with `θ ~ U(-scale, scale)`.
pub fn random_policy(mdp: &TabularMdp, seed: u64, scale: f64) -> SoftmaxPolicy {
    let mut rng = rng_from_seed(seed);
    let theta = (0..mdp.n_pairs()).map(|_| rng.random_range(-scale..=scale)).collect();
    SoftmaxPolicy::from_theta(mdp.n_states(), mdp.n_actions(), 1.0, theta).expect("shape")
}

/// Random full-support behavior policy.
pub fn random_behavior(mdp: &TabularMdp, seed: u64) -> PolicyTable {
    let mut rng = rng_from_seed(seed);
    let probs = (0..mdp.n_states())
        .map(|_| {
            let raw: Vec<f64> = (0..mdp.n_actions()).map(|_| rng.random_range(0.2..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / z).collect()
        })
        .collect();
    PolicyTable { probs }
}

/// `(1 − λ)π + λ·uniform`.
pub fn mixed_behavior(pi: &PolicyTable, lambda: f64) -> PolicyTable {
    let probs = pi
        .probs
        .iter()
        .map(|row| row.iter().map(|p| (1.0 - lambda) * p + lambda / row.len() as f64).collect())
        .collect();
    PolicyTable { probs }
}

/// Dense `P(s'|s,a)·w(s',a')` over pairs, terminal successors dropped.
pub fn dense_kernel(mdp: &TabularMdp, w: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
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
                    k[(s * na + a, o.next * na + b)] += o.prob * w(o.next, b);
                }
            }
        }
    }
    k
}

/// Solves `(I − c·K) x = rhs`.
pub fn solve_resolvent(k: &DMatrix<f64>, c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = k.nrows();
    let a = DMatrix::identity(n, n) - k * c;
    let x = a.lu().solve(&DVector::from_column_slice(rhs)).expect("non-singular");
    x.iter().copied().collect()
}

/// Optimal state values by value iteration on expected rewards.
pub fn optimal_values(mdp: &TabularMdp, tol: f64) -> Vec<f64> {
    let gamma = mdp.discount();
    let mut v = vec![0.0; mdp.n_states()];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let best = (0..mdp.n_actions())
                .map(|a| {
                    mdp.outcomes(s, a)
                        .iter()
                        .map(|o| {
                            o.prob * (o.reward.mean() + if mdp.is_terminal(o.next) { 0.0 } else { gamma * v[o.next] })
                        })
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < tol {
            return v;
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Importance-weighted return `R₁ + γρ₂(R₂ + γρ₃(…))` from `(s, a)` with
/// later actions drawn from `b`.
pub fn weighted_return<R: Rng>(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    b: &PolicyTable,
    mut s: usize,
    mut a: usize,
    rng: &mut R,
) -> f64 {
    let gamma = mdp.discount();
    let (mut g, mut w) = (0.0, 1.0);
    for _ in 0..mdp.max_steps() {
        let out = mdp.step(&s, a, rng).expect("valid action");
        g += w * out.reward;
        if out.done {
            break;
        }
        s = out.next_state;
        a = sample_categorical(b.probs[s].iter().copied(), rng);
        w *= gamma * pi.prob(s, a) / b.prob(s, a);
    }
    g
}
