//! Significance-aware status-update scheduling for remote safety monitoring.
//!
//! The crate is organised bottom-up:
//!
//! - [`markov`]: Markov source models, safety maps and agent classes.
//! - [`loss`]: loss matrices, optimal estimators and the penalty tables
//!   `q(delta, x)` / `f(delta, x)`.
//! - [`bandit`]: per-bandit average-cost MDP, gain index and the dual
//!   price search.
//! - [`scheduler`]: Maximum Gain First and the baseline policies.
//! - [`sim`]: the time-slotted multi-agent erasure-channel simulator.
//! - [`config`] and [`commands`]: manifests, CLI commands and outputs.

pub mod bandit;
pub mod commands;
pub mod config;
pub mod error;
pub mod loss;
pub mod markov;
pub mod scheduler;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

/// Version line embedded in every output file.
pub fn version_line() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}
