//! Locally interdependent multi-agent MDPs: the cutoff companion MDP, its
//! finite-horizon group-state solver, executable policy extraction with
//! memory, a rollout harness, verification oracles, and the benchmark
//! environments.

pub mod bench;
pub mod envs;
pub mod extraction;
pub mod geometry;
pub mod model;
pub mod rollout;
pub mod solver;
pub mod swarm;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("budget exceeded while enumerating {what}: {count} states")]
    BudgetExceeded { what: String, count: usize },
    #[error("solved tables do not cover group state {key} (t={t})")]
    Coverage { key: String, t: usize },
    #[error("partial value: block {0} is heuristic-delegated")]
    PartialValue(String),
    #[error("internal consistency: {0}")]
    Internal(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// State-enumeration cap, overridable with the LOCIM_BUDGET env var.
pub fn state_budget() -> usize {
    std::env::var("LOCIM_BUDGET")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(20_000_000)
}
