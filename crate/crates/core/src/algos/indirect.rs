use rand::Rng;

use super::{AlgoConfig, EpisodeStats};
use crate::critic::CriticPair;
use crate::envs::{sample_categorical, Environment};
use crate::features::FeatureMap;
use crate::policy::SoftmaxPolicy;
use crate::Result;

/// Monte-Carlo variance-adjusted actor-critic.
///
/// Rolls out a full episode under the current policy, regresses `Q` toward
/// the return `G_t` and `M` (stored in `critic.sigma`) toward `G_t²` using
/// the episode-start weights for predictions, moves `v0` toward `G_0`, then
/// takes one batch actor step
/// `Σ_t ∇log π {γ^t Q − μ(γ^{2t} M + 2γ^{t+1} Ḡ[t] Q − 2γ^t V(S₀) Q)}`.
/// `Ḡ` starts as `[0]` and gains the `γ²`-discounted tail sum at each step.
pub fn run_episode_vaac<E, F, R>(
    env: &E,
    features: &F,
    policy: &mut SoftmaxPolicy,
    critic: &mut CriticPair,
    v0: &mut f64,
    cfg: &AlgoConfig,
    rng: &mut R,
) -> Result<EpisodeStats>
where
    E: Environment,
    F: FeatureMap<E::State>,
    R: Rng + ?Sized,
{
    let gamma = cfg.gamma;
    let sz = cfg.step_sizes;
    let mut stats = EpisodeStats::default();
    let mut discount = 1.0;

    let mut probs = vec![0.0; policy.n_actions()];
    let mut actives: Vec<Vec<usize>> = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();

    let mut state = env.reset(rng);
    loop {
        let active = features.active(&state)?;
        policy.probs_into(&active, &mut probs);
        let action = sample_categorical(probs.iter().copied(), rng);
        let out = env.step(&state, action, rng)?;
        stats.record(out.reward, discount);
        discount *= gamma;
        actives.push(active);
        actions.push(action);
        rewards.push(out.reward);
        if out.done {
            break;
        }
        if stats.steps >= env.max_steps() {
            stats.truncated = true;
            break;
        }
        state = out.next_state;
    }

    let n = rewards.len();
    let mut returns = vec![0.0; n];
    let mut returns_sq_disc = vec![0.0; n];
    let (mut g, mut g2) = (0.0, 0.0);
    for t in (0..n).rev() {
        g = rewards[t] + gamma * g;
        g2 = rewards[t] + gamma * gamma * g2;
        returns[t] = g;
        returns_sq_disc[t] = g2;
    }

    let q_start = critic.q.clone();
    let m_start = critic.sigma.clone();
    let mut g_bar = Vec::with_capacity(n + 1);
    g_bar.push(0.0);
    for t in 0..n {
        let (active, a, g) = (&actives[t], actions[t], returns[t]);
        g_bar.push(returns_sq_disc[t]);
        critic.q.update_scheduled(active, a, sz.alpha_w, critic.schedule, g - q_start.value(active, a));
        critic.sigma.update_scheduled(active, a, sz.alpha_z, critic.schedule, g * g - m_start.value(active, a));
        if t == 0 {
            *v0 += sz.alpha_w * (g - *v0);
        }
    }

    let mu = cfg.psi;
    let mut grad = vec![0.0; policy.theta().len()];
    let mut gt = 1.0;
    for t in 0..n {
        let (active, a) = (&actives[t], actions[t]);
        let q = critic.q.value(active, a);
        let m = critic.sigma.value(active, a);
        let weight = gt * q - mu * (gt * gt * m + 2.0 * gt * gamma * g_bar[t] * q - 2.0 * gt * *v0 * q);
        policy.probs_into(active, &mut probs);
        for (i, s) in policy.grad_log_prob_with(active, a, &probs) {
            grad[i] += s * weight;
        }
        gt *= gamma;
    }
    for (th, g) in policy.theta_mut().iter_mut().zip(&grad) {
        *th += sz.alpha_theta * g;
    }
    Ok(stats)
}

/// TD variant of the second-moment actor-critic. `critic.sigma` holds `M̂`.
///
/// `δ̄ = R² + γ² M̂(S',A') + 2γR Q̂(S',A') − M̂(S,A)`; the actor weight is
/// `I_Q Q̂ − μ{I_M M̂ + 2γ I_Q G Q̂ − 2 I_Q V₀ Q̂}` with
/// `V₀ = Σ_a π(a|S₀) Q̂(S₀, a)`, followed by `I_Q ← γI_Q`, `I_M ← γ²I_M`,
/// `G ← G + I_M R`.
pub fn run_episode_vaac_td<E, F, R>(
    env: &E,
    features: &F,
    policy: &mut SoftmaxPolicy,
    critic: &mut CriticPair,
    cfg: &AlgoConfig,
    rng: &mut R,
) -> Result<EpisodeStats>
where
    E: Environment,
    F: FeatureMap<E::State>,
    R: Rng + ?Sized,
{
    let gamma = cfg.gamma;
    let gamma_sq = gamma * gamma;
    let sz = cfg.step_sizes;
    let mu = cfg.psi;
    let mut stats = EpisodeStats::default();
    let mut discount = 1.0;

    let n_actions = policy.n_actions();
    let mut probs = vec![0.0; n_actions];
    let mut probs0 = vec![0.0; n_actions];
    let mut active = Vec::new();
    let mut next_active = Vec::new();

    let mut state = env.reset(rng);
    features.active_into(&state, &mut active)?;
    let start_active = active.clone();
    policy.probs_into(&active, &mut probs);
    let mut action = sample_categorical(probs.iter().copied(), rng);
    let (mut i_q, mut i_m, mut g_acc) = (1.0, 1.0, 0.0);

    loop {
        let out = env.step(&state, action, rng)?;
        let r = out.reward;
        stats.record(r, discount);
        discount *= gamma;
        let truncated = !out.done && stats.steps >= env.max_steps();
        stats.truncated = truncated;

        let next = if out.done || truncated {
            None
        } else {
            features.active_into(&out.next_state, &mut next_active)?;
            policy.probs_into(&next_active, &mut probs);
            Some(sample_categorical(probs.iter().copied(), rng))
        };

        let (q_next, m_next) = match next {
            Some(a) => (critic.q.value(&next_active, a), critic.sigma.value(&next_active, a)),
            None => (0.0, 0.0),
        };
        let delta = r + gamma * q_next - critic.q.value(&active, action);
        let delta_bar = r * r + gamma_sq * m_next + 2.0 * gamma * r * q_next - critic.sigma.value(&active, action);
        critic.update_value(&active, action, sz.alpha_w, delta);
        critic.update_variance(&active, action, sz.alpha_z, delta_bar);

        let q = critic.q.value(&active, action);
        policy.probs_into(&start_active, &mut probs0);
        let v0: f64 = (0..n_actions).map(|b| probs0[b] * critic.q.value(&start_active, b)).sum();
        let m = critic.sigma.value(&active, action);
        let weight = i_q * q - mu * (i_m * m + 2.0 * gamma * i_q * g_acc * q - 2.0 * i_q * v0 * q);
        policy.probs_into(&active, &mut probs);
        policy.add_scaled_score(&active, action, &probs, sz.alpha_theta * weight);
        i_q *= gamma;
        i_m *= gamma_sq;
        g_acc += i_m * r;

        match next {
            None => break,
            Some(a) => {
                state = out.next_state;
                std::mem::swap(&mut active, &mut next_active);
                action = a;
            }
        }
    }
    Ok(stats)
}
