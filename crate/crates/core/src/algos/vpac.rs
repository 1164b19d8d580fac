use rand::Rng;

use super::{AlgoConfig, EpisodeAccumulators, EpisodeStats};
use crate::critic::{CriticPair, Transition};
use crate::envs::{sample_categorical, Environment};
use crate::features::FeatureMap;
use crate::policy::{importance_ratio, BehaviorPolicy, SoftmaxPolicy};
use crate::Result;

/// One-step actor-critic: the on-policy loop with the variance critic and
/// penalty switched off.
pub fn run_episode_ac<E, F, R>(
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
    on_policy_episode(env, features, policy, critic, cfg, rng, false)
}

/// On-policy variance-penalized actor-critic.
///
/// Per step: sample `A'`, compute `δ` and `δ̄`, update the value then the
/// variance critic, take the actor step along
/// `∇log π(A|S) (I_Q Q̂ − ψ I_σ σ̂)`, then discount the accumulators.
pub fn run_episode_vpac_on<E, F, R>(
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
    on_policy_episode(env, features, policy, critic, cfg, rng, true)
}

fn on_policy_episode<E, F, R>(
    env: &E,
    features: &F,
    policy: &mut SoftmaxPolicy,
    critic: &mut CriticPair,
    cfg: &AlgoConfig,
    rng: &mut R,
    variance: bool,
) -> Result<EpisodeStats>
where
    E: Environment,
    F: FeatureMap<E::State>,
    R: Rng + ?Sized,
{
    let gamma = cfg.gamma;
    let gamma_bar = gamma * gamma;
    let sz = cfg.step_sizes;
    let neg_before = critic.negative_sigma_reads();
    let mut stats = EpisodeStats::default();
    let mut discount = 1.0;

    let mut probs = vec![0.0; policy.n_actions()];
    let mut active = Vec::new();
    let mut next_active = Vec::new();

    let mut state = env.reset(rng);
    features.active_into(&state, &mut active)?;
    policy.probs_into(&active, &mut probs);
    let mut action = sample_categorical(probs.iter().copied(), rng);
    let mut acc = EpisodeAccumulators::on_policy(cfg.psi);

    loop {
        let out = env.step(&state, action, rng)?;
        stats.record(out.reward, discount);
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

        let t =
            Transition { active: &active, action, reward: out.reward, next: next.map(|a| (next_active.as_slice(), a)) };
        let delta = critic.td_error_value(&t, gamma, None);
        let delta_bar = if variance { critic.td_error_variance(delta, &t, gamma_bar, None) } else { 0.0 };
        critic.update_value(&active, action, sz.alpha_w, delta);
        if variance {
            critic.update_variance(&active, action, sz.alpha_z, delta_bar);
        }

        let q = critic.q_value(&active, action);
        let weight = if variance {
            acc.i_q * q - cfg.psi * acc.i_sigma * critic.sigma_value(&active, action)
        } else {
            acc.i_q * q
        };
        policy.probs_into(&active, &mut probs);
        policy.add_scaled_score(&active, action, &probs, sz.alpha_theta * weight);
        acc.advance_on(gamma, gamma_bar);

        match next {
            None => break,
            Some(a) => {
                state = out.next_state;
                std::mem::swap(&mut active, &mut next_active);
                action = a;
            }
        }
    }
    stats.negative_sigma_reads = critic.negative_sigma_reads() - neg_before;
    Ok(stats)
}

/// Off-policy variance-penalized actor-critic.
///
/// Actions come from `behavior`; ratios are corrected per `cfg.correction`.
/// The actor weight is `I_Q ρ_Q Q̂ − ψ̄ I_σ ρ_σ σ̂` with `ψ̄` doubled after the
/// first step.
pub fn run_episode_vpac_off<E, F, R>(
    env: &E,
    features: &F,
    policy: &mut SoftmaxPolicy,
    behavior: &BehaviorPolicy,
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
    let gamma_bar = gamma * gamma;
    let sz = cfg.step_sizes;
    let neg_before = critic.negative_sigma_reads();
    let mut stats = EpisodeStats::default();
    let mut discount = 1.0;

    let n_actions = policy.n_actions();
    let mut pi = vec![0.0; n_actions];
    let mut b = vec![0.0; n_actions];
    let mut active = Vec::new();
    let mut next_active = Vec::new();

    // Ratio of the pair about to be taken, under the current target.
    let mut choose = |policy: &SoftmaxPolicy, active: &[usize], rng: &mut R| -> Result<(usize, f64)> {
        policy.probs_into(active, &mut pi);
        behavior.probs_into(active, &pi, &mut b);
        let a = sample_categorical(b.iter().copied(), rng);
        let rho = importance_ratio(pi[a], b[a], active.first().copied().unwrap_or(0), a)?;
        Ok((a, cfg.correction.apply(rho)))
    };

    let mut state = env.reset(rng);
    features.active_into(&state, &mut active)?;
    let (mut action, rho0) = choose(policy, &active, rng)?;
    let mut acc = EpisodeAccumulators::off_policy(cfg.psi, rho0);
    let mut probs = vec![0.0; n_actions];

    loop {
        let out = env.step(&state, action, rng)?;
        stats.record(out.reward, discount);
        discount *= gamma;
        let truncated = !out.done && stats.steps >= env.max_steps();
        stats.truncated = truncated;

        let next = if out.done || truncated {
            None
        } else {
            features.active_into(&out.next_state, &mut next_active)?;
            Some(choose(policy, &next_active, rng)?)
        };

        let t = Transition {
            active: &active,
            action,
            reward: out.reward,
            next: next.map(|(a, _)| (next_active.as_slice(), a)),
        };
        let rho_next = next.map(|(_, r)| r).unwrap_or(1.0);
        let delta = critic.td_error_value(&t, gamma, Some(rho_next));
        let delta_bar = critic.td_error_variance(delta, &t, gamma_bar, Some(rho_next));
        critic.update_value(&active, action, sz.alpha_w, delta);
        critic.update_variance(&active, action, sz.alpha_z, delta_bar);

        let q = critic.q_value(&active, action);
        let sigma = critic.sigma_value(&active, action);
        let weight = acc.i_q * acc.rho_q * q - acc.psi_bar * acc.i_sigma * acc.rho_sigma * sigma;
        policy.probs_into(&active, &mut probs);
        policy.add_scaled_score(&active, action, &probs, sz.alpha_theta * weight);

        match next {
            None => break,
            Some((a, rho)) => {
                state = out.next_state;
                std::mem::swap(&mut active, &mut next_active);
                action = a;
                acc.advance_off(cfg.psi, gamma, gamma_bar, rho);
            }
        }
    }
    stats.negative_sigma_reads = critic.negative_sigma_reads() - neg_before;
    Ok(stats)
}
