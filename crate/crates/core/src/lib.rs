//! Mean-variance actor-critic learning for episodic MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`envs`]: explicit tabular MDPs, the gridworlds built on them and a
//!   continuous puddle world.
//! * [`features`]: one-hot and tile-coded sparse binary features.
//! * [`policy`]: softmax (Boltzmann) policies over those features, their
//!   score functions and importance ratios.
//! * [`critic`]: linear value / variance critics and their TD errors.
//! * [`algos`]: the episodic learners (AC, on/off-policy VPAC, VAAC, VAAC_TD).
//! * [`oracle`]: exact linear-algebra solutions of every Bellman recursion
//!   used by the learners, plus Monte-Carlo estimators and sequence helpers.
//! * [`harness`]: configuration, seeded sweeps, checkpoints and CSV output.

pub mod algos;
pub mod critic;
pub mod envs;
pub mod error;
pub mod features;
pub mod harness;
pub mod oracle;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
