//! Ground truth: exact solutions of the value, variance and second-moment
//! Bellman equations on tabular MDPs, closed-form policy gradients,
//! Monte-Carlo return statistics and sequence helpers.

mod exact;
mod gradient;
mod montecarlo;
mod seq;

pub use exact::{
    pair_kernel, solve_q, solve_second_moment, solve_sigma_direct, solve_sigma_offpolicy, spectral_radius,
    state_values, ExactSolution, SolveMethod, SolveOptions,
};
pub use gradient::{grad_j_exact, objective_j, objective_j_off, score_matrix, GradMode};
pub use montecarlo::{monte_carlo_return_stats, rollout_return, tabular_return_stats, ReturnStats, StartSpec};
pub use seq::{gae, gae_direct, sharpe};
