//! Cooperative multi-agent Q-learning with monotonic value factorisation.
//!
//! Per-agent utility networks produce `Q_a(τ^a, u^a)`; a mixer combines the
//! chosen utilities into a joint `Q_tot`. Mixers in the QMIX family keep
//! `∂Q_tot/∂Q_a ≥ 0`, so the joint greedy action is the tuple of per-agent
//! greedy actions and execution stays decentralised.

pub mod agents;
pub mod autodiff;
pub mod config;
pub mod envs;
mod error;
pub mod harness;
pub mod learner;
pub mod mixers;
pub mod oracles;
pub mod rng;

pub use error::{Error, Result};
