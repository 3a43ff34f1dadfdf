//! Error types shared across the crate.

use thiserror::Error;

/// Rejected model parameters. Every variant names the violated invariant so
/// a frontend can surface a one-line diagnostic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("p must lie strictly inside (0, 1), got {0}")]
    P(f64),
    #[error("theta must lie in [0, 1), got {0}")]
    Theta(f64),
    #[error("k must be at least 1")]
    K,
    #[error("r and q must lie strictly inside (0, 1), got r={r}, q={q}")]
    ReinforcementProbs { r: f64, q: f64 },
    #[error("minimal walk requires 0 <= r - q < 1, got r - q = {0}")]
    ReinforcementDrift(f64),
    #[error("alpha must lie in [1/2, 1), got {0}")]
    Alpha(f64),
}

/// Domain errors from the special-function evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("log_gamma requires x > 0, got {0}")]
    LogGamma(f64),
    #[error("inv_beta requires a > 0, got {0}")]
    InvBeta(f64),
    #[error("limit covariance requires 0 < s <= t, got s={s}, t={t}")]
    CovarianceTimes { s: f64, t: f64 },
}

/// Errors from the exact dynamic-programming oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(
        "state budget exceeded: k={k}, n={n} needs an estimated {estimated_transitions:.3e} \
         transitions (limit {max_transitions:.3e}, k limit {max_k})"
    )]
    BudgetExceeded {
        k: usize,
        n: usize,
        estimated_transitions: f64,
        max_transitions: f64,
        max_k: usize,
    },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

/// Invalid Monte Carlo harness configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("config: {0}")]
    Config(String),
    #[error("ks_statistic requires a nonempty sample")]
    EmptySample,
}

/// A [`crate::model::Path`] whose arrays disagree in length.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("path arrays disagree: {outcomes} outcomes vs {prefix_sums} prefix sums")]
pub struct LengthMismatch {
    pub outcomes: usize,
    pub prefix_sums: usize,
}
