//! Simulation and verification toolkit for correlated Bernoulli sequences
//! whose success probability depends on the mean of the previous `k`
//! outcomes.
//!
//! The crate has four layers:
//!
//! - [`model`]: parameters (including the reinforced-walk presentations and
//!   their canonical mapping), the memory-window state, one-step
//!   probabilities, path simulation, martingale increments, and the center
//!   of mass.
//! - [`closed_form`]: the tabulated limit variance for all three
//!   presentations (with its beta-function inverse and log-gamma support),
//!   limiting covariances, center-of-mass limits, and an independently
//!   derived stationary-chain long-run variance used to cross-check the
//!   tabulated values.
//! - [`oracle`]: exact distribution of the success count by dynamic
//!   programming over window states, exact variance trajectories, and an
//!   exhaustive martingale-moment audit. Ground truth for small instances.
//! - [`mc`]: a parallel, deterministically seeded Monte Carlo harness with
//!   mergeable moment accumulators and named pass/fail verification checks
//!   against the closed forms.
//!
//! Everything is a pure function of its inputs plus an explicit stream
//! handle; reports are byte-reproducible for a fixed master seed across
//! thread counts.

pub mod closed_form;
pub mod error;
pub mod mc;
pub mod model;
pub mod oracle;

pub use closed_form::{
    com_limits, inv_beta, limit_covariance, log_gamma, sigma2_chain, sigma2_elephant,
    sigma2_ksum, sigma2_ksum_general, sigma2_minimal, Branch, ElephantVariance, LimitSpec,
    VarianceResult,
};
pub use error::{DomainError, LengthMismatch, McError, OracleError, ParamError};
pub use mc::{
    clt_report, com_report, fclt_report, ks_statistic, lil_report, mapping_report,
    martingale_report, run_batch, run_suite, Check, CheckKind, SimulationConfig, StatReport,
    Suite, SummaryStats,
};
pub use model::{
    canonical_params, center_of_mass, martingale_increments, path_rng, simulate_path,
    spin_position, step_probability, MartingalePath, ModelKind, ModelParams, Path, StepRule,
    WindowState,
};
pub use oracle::{
    exact_martingale_audit, exact_moments, exact_pmf, exact_pmf_rule, variance_trajectory,
    variance_trajectory_rule, Budget, MartingaleAudit, Pmf,
};
