use serde::{Deserialize, Serialize};

/// Per-episode discount and importance accumulators.
///
/// On-policy: after `t` steps `i_q = γ^t`, `i_sigma = γ̄^t`. Off-policy, the
/// ratio products start at `ρ(S₀, A₀)` and are multiplied by `ρ` and `ρ²` of
/// each new pair; `psi_bar` is `ψ` for the first actor update and `2ψ` after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAccumulators {
    pub i_q: f64,
    pub i_sigma: f64,
    pub rho_q: f64,
    pub rho_sigma: f64,
    pub psi_bar: f64,
    pub first_step: bool,
    /// Running reward accumulator of the TD second-moment learner.
    pub g_bar: f64,
}

impl EpisodeAccumulators {
    pub fn on_policy(psi: f64) -> Self {
        EpisodeAccumulators {
            i_q: 1.0,
            i_sigma: 1.0,
            rho_q: 1.0,
            rho_sigma: 1.0,
            psi_bar: psi,
            first_step: true,
            g_bar: 0.0,
        }
    }

    /// Both ratio products start at the (unsquared) ratio of the first pair.
    pub fn off_policy(psi: f64, rho0: f64) -> Self {
        EpisodeAccumulators { rho_q: rho0, rho_sigma: rho0, ..Self::on_policy(psi) }
    }

    pub fn advance_on(&mut self, gamma: f64, gamma_bar: f64) {
        self.first_step = false;
        self.i_q *= gamma;
        self.i_sigma *= gamma_bar;
    }

    /// `rho` is the (corrected) ratio of the pair the agent moves to.
    pub fn advance_off(&mut self, psi: f64, gamma: f64, gamma_bar: f64, rho: f64) {
        if self.first_step {
            self.psi_bar = 2.0 * psi;
        }
        self.advance_on(gamma, gamma_bar);
        self.rho_q *= rho;
        self.rho_sigma *= rho * rho;
    }
}
