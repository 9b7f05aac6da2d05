//! Adaptive adversarial bandits with optimistic log-barrier mirror descent.
//!
//! The crate is layered bottom-up:
//!
//! * [`barrier`]: the log-barrier regularizer and the simplex mirror step.
//! * [`estimators`]: loss estimates, predictions, corrections, stability checks.
//! * [`algorithm`]: the learners and their configurations.
//! * [`env`]: loss sequences and zero-sum self-play.
//! * [`baselines`]: grid oracle, Exp3, regret statistics.
//! * [`harness`]: configured, seeded experiments with CSV output.

pub mod algorithm;
pub mod barrier;
pub mod baselines;
pub mod env;
pub mod error;
pub mod estimators;
pub mod harness;

pub use error::{Error, Result};
