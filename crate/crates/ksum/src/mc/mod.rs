//! Parallel Monte Carlo harness: simulates paths in deterministic per-path
//! streams, accumulates mergeable statistics of the rescaled quantities the
//! limit theorems are about, and renders pass/fail verification reports
//! against the closed forms.
//!
//! Determinism contract: paths are keyed by `(master_seed, path_index)`
//! alone, work is split into fixed-size batches, and batch accumulators are
//! merged in batch order. Reports are therefore byte-identical across
//! thread counts.

pub mod ks;
pub mod moments;

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use ks::{ks_statistic, standard_normal_cdf};
pub use moments::{CoMoments, Moments};

use crate::closed_form::{sigma2_chain, sigma2_ksum};
use crate::error::McError;
use crate::model::{
    canonical_params, path_rng, step_probability, ModelKind, ModelParams, StepRule, WindowState,
};
use crate::oracle::{exact_martingale_audit, exact_pmf_rule, Budget};

/// Paths per work item. Fixed so the merge tree does not depend on the
/// thread count.
const PATHS_PER_BATCH: usize = 1024;

/// Default time grid for the rescaled success-rate process; the smallest
/// time stays at 0.1 to keep `floor(n t)` well past the window length and
/// away from the `sigma2 / t` blow-up at t = 0.
pub const DEFAULT_GRID: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

/// Default pass threshold in standard errors for moment checks.
pub const DEFAULT_SIGMA_LEVEL: f64 = 4.0;

/// Default half-width of the acceptance band for the limit-covariance
/// ratio checks.
pub const DEFAULT_FCLT_BAND: f64 = 0.07;

/// One Monte Carlo run: model, horizon, path count, master seed, and the
/// evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationConfig {
    pub model: ModelKind,
    pub n: usize,
    pub paths: usize,
    pub master_seed: u64,
    /// Ascending times in (0, 1] at which the rescaled success rate is
    /// recorded; `floor(n * t)` must be at least 1.
    pub grid: Vec<f64>,
    /// Pass threshold for z-score checks, in standard errors.
    pub sigma_level: f64,
    /// Half-width of the band for covariance-ratio checks.
    pub fclt_band: f64,
    /// Index of the first path; lets disjoint shards of one logical run be
    /// computed separately and merged.
    pub path_offset: u64,
}

impl SimulationConfig {
    pub fn new(model: ModelKind, n: usize, paths: usize, master_seed: u64) -> Self {
        Self {
            model,
            n,
            paths,
            master_seed,
            grid: DEFAULT_GRID.to_vec(),
            sigma_level: DEFAULT_SIGMA_LEVEL,
            fclt_band: DEFAULT_FCLT_BAND,
            path_offset: 0,
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.n == 0 {
            return Err(McError::Config("horizon n must be at least 1".into()));
        }
        if self.paths == 0 {
            return Err(McError::Config("paths must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(McError::Config("grid must be nonempty".into()));
        }
        for w in self.grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(McError::Config(format!(
                    "grid must be strictly ascending, got {} before {}",
                    w[0], w[1]
                )));
            }
        }
        let t_min = self.grid[0];
        let t_max = *self.grid.last().unwrap();
        if !(t_min > 0.0 && t_max <= 1.0) {
            return Err(McError::Config(format!(
                "grid times must lie in (0, 1], got range [{t_min}, {t_max}]"
            )));
        }
        if (self.n as f64 * t_min).floor() < 1.0 {
            return Err(McError::Config(format!(
                "grid minimum {t_min} gives floor(n*t) = 0 at n = {}",
                self.n
            )));
        }
        if !(self.sigma_level > 0.0) {
            return Err(McError::Config("sigma level must be positive".into()));
        }
        if !(self.fclt_band > 0.0) {
            return Err(McError::Config("fclt band must be positive".into()));
        }
        Ok(())
    }
}

/// Mergeable per-path statistics of the rescaled quantities: the success
/// rate at each grid time (with cross moments per time pair), the endpoint,
/// the center of mass, the martingale sum, and the martingale-equivalence
/// gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub grid: Vec<f64>,
    /// Moments of `sqrt(n) (S_{floor(nt)}/floor(nt) - p)` per grid time.
    pub time: Vec<Moments>,
    /// Cross moments for grid-time pairs `(a, b)`, `a < b`, in row-major
    /// upper-triangle order.
    pub cross: Vec<CoMoments>,
    /// Moments of the endpoint statistic `sqrt(n) (S_n/n - p)`.
    pub endpoint: Moments,
    /// Moments of `sqrt(n) (C_n/n - p/2)`.
    pub com: Moments,
    /// Moments of `M_n / sqrt(n)`.
    pub martingale: Moments,
    /// Moments of `|M_n - (1-theta)(S_n - n p)| / sqrt(n)`.
    pub mart_gap: Moments,
}

impl SummaryStats {
    fn empty(grid: &[f64]) -> Self {
        let g = grid.len();
        Self {
            grid: grid.to_vec(),
            time: vec![Moments::new(); g],
            cross: vec![CoMoments::new(); g * (g - 1) / 2],
            endpoint: Moments::new(),
            com: Moments::new(),
            martingale: Moments::new(),
            mart_gap: Moments::new(),
        }
    }

    /// Index of the pair `(a, b)`, `a < b`, in [`Self::cross`].
    pub fn pair_index(a: usize, b: usize, grid_len: usize) -> usize {
        debug_assert!(a < b && b < grid_len);
        a * grid_len - a * (a + 1) / 2 + (b - a - 1)
    }

    pub fn merge(&mut self, other: &SummaryStats) {
        debug_assert_eq!(self.grid, other.grid);
        for (m, o) in self.time.iter_mut().zip(&other.time) {
            m.merge(o);
        }
        for (c, o) in self.cross.iter_mut().zip(&other.cross) {
            c.merge(o);
        }
        self.endpoint.merge(&other.endpoint);
        self.com.merge(&other.com);
        self.martingale.merge(&other.martingale);
        self.mart_gap.merge(&other.mart_gap);
    }

    pub fn count(&self) -> u64 {
        self.endpoint.count()
    }

    fn record(&mut self, ys: &[f64], y_end: f64, u: f64, v: f64, d: f64) {
        let g = self.grid.len();
        for (m, &y) in self.time.iter_mut().zip(ys) {
            m.update(y);
        }
        for a in 0..g {
            for b in (a + 1)..g {
                self.cross[Self::pair_index(a, b, g)].update(ys[a], ys[b]);
            }
        }
        self.endpoint.update(y_end);
        self.com.update(u);
        self.martingale.update(v);
        self.mart_gap.update(d);
    }
}

/// Per-path samples retained for distribution-shape diagnostics, in path
/// order.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    /// `sqrt(n) (S_n/n - p)` per path.
    pub endpoint: Vec<f64>,
    /// `sqrt(n) (C_n/n - p/2)` per path.
    pub com: Vec<f64>,
}

struct PathValues {
    y_end: f64,
    u: f64,
    v: f64,
    d: f64,
}

/// Streams one path, recording the grid snapshots into `ys`.
fn simulate_path_values<R: rand::Rng>(
    params: &ModelParams,
    n: usize,
    marks: &[usize],
    rng: &mut R,
    ys: &mut Vec<f64>,
) -> PathValues {
    let p = params.p();
    let theta = params.theta();
    let sqrt_n = (n as f64).sqrt();
    let mut window = WindowState::new(params.k());
    let mut s: u64 = 0;
    let mut com_sum: u64 = 0;
    let mut m = 0.0f64;
    let mut mark_ptr = 0usize;
    ys.clear();
    for i in 1..=n {
        let e = step_probability(&window, params);
        let x = u8::from(rng.random::<f64>() < e);
        s += u64::from(x);
        com_sum += s;
        m += f64::from(x) - e;
        window.push(x);
        while mark_ptr < marks.len() && marks[mark_ptr] == i {
            ys.push(sqrt_n * (s as f64 / i as f64 - p));
            mark_ptr += 1;
        }
    }
    let nf = n as f64;
    PathValues {
        y_end: sqrt_n * (s as f64 / nf - p),
        u: sqrt_n * (com_sum as f64 / (nf * nf) - p / 2.0),
        v: m / sqrt_n,
        d: (m - (1.0 - theta) * (s as f64 - nf * p)).abs() / sqrt_n,
    }
}

/// Runs the configured batch and returns the mergeable statistics together
/// with the per-path samples needed for shape diagnostics.
pub fn run_with_samples(config: &SimulationConfig) -> Result<(SummaryStats, Samples), McError> {
    config.validate()?;
    let params = canonical_params(&config.model)?;
    let marks: Vec<usize> = config
        .grid
        .iter()
        .map(|&t| ((config.n as f64) * t).floor() as usize)
        .collect();
    let batches = config.paths.div_ceil(PATHS_PER_BATCH);
    let results: Vec<(SummaryStats, Vec<f64>, Vec<f64>)> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let lo = batch * PATHS_PER_BATCH;
            let hi = (lo + PATHS_PER_BATCH).min(config.paths);
            let mut stats = SummaryStats::empty(&config.grid);
            let mut endpoint = Vec::with_capacity(hi - lo);
            let mut com = Vec::with_capacity(hi - lo);
            let mut ys = Vec::with_capacity(config.grid.len());
            for idx in lo..hi {
                let mut rng = path_rng(config.master_seed, config.path_offset + idx as u64);
                let pv = simulate_path_values(&params, config.n, &marks, &mut rng, &mut ys);
                stats.record(&ys, pv.y_end, pv.u, pv.v, pv.d);
                endpoint.push(pv.y_end);
                com.push(pv.u);
            }
            (stats, endpoint, com)
        })
        .collect();

    let mut stats = SummaryStats::empty(&config.grid);
    let mut samples = Samples::default();
    samples.endpoint.reserve(config.paths);
    samples.com.reserve(config.paths);
    for (batch_stats, endpoint, com) in results {
        stats.merge(&batch_stats);
        samples.endpoint.extend(endpoint);
        samples.com.extend(com);
    }
    Ok((stats, samples))
}

/// Runs the configured batch and returns the mergeable statistics.
pub fn run_batch(config: &SimulationConfig) -> Result<SummaryStats, McError> {
    run_with_samples(config).map(|(stats, _)| stats)
}

/// How a check decides pass/fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// `|estimate - target| <= sigma_level * stderr`.
    Z,
    /// `estimate <= target`.
    Upper,
    /// `|estimate - target| <= tolerance`.
    Band,
}

/// One named verification check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub estimate: f64,
    pub target: f64,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
    /// Hard checks gate the run; soft checks only warn.
    pub hard: bool,
    pub note: Option<String>,
}

impl Check {
    fn z_score(name: &str, estimate: f64, target: f64, stderr: f64, sigma_level: f64) -> Self {
        let z = (estimate - target) / stderr;
        Self {
            name: name.to_string(),
            kind: CheckKind::Z,
            estimate,
            target,
            stderr: Some(stderr),
            z: Some(z),
            tolerance: None,
            pass: z.abs() <= sigma_level,
            hard: true,
            note: None,
        }
    }

    fn upper(name: &str, estimate: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: CheckKind::Upper,
            estimate,
            target: bound,
            stderr: None,
            z: None,
            tolerance: None,
            pass: estimate <= bound,
            hard: true,
            note: None,
        }
    }

    fn band(name: &str, estimate: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: CheckKind::Band,
            estimate,
            target,
            stderr: None,
            z: None,
            tolerance: Some(tolerance),
            pass: (estimate - target).abs() <= tolerance,
            hard: true,
            note: None,
        }
    }

    fn soft(mut self) -> Self {
        self.hard = false;
        self
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

/// Canonical parameters echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalEcho {
    pub p: f64,
    pub theta: f64,
    pub k: usize,
}

impl From<&ModelParams> for CanonicalEcho {
    fn from(p: &ModelParams) -> Self {
        Self {
            p: p.p(),
            theta: p.theta(),
            k: p.k(),
        }
    }
}

/// A suite's verification verdicts, reproducible from the configuration and
/// master seed alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatReport {
    pub suite: String,
    pub model: ModelKind,
    pub canonical: CanonicalEcho,
    pub n: usize,
    pub paths: usize,
    pub master_seed: u64,
    pub grid: Vec<f64>,
    pub sigma_level: f64,
    pub checks: Vec<Check>,
    /// Wall-clock time of the suite; excluded from serialized output so
    /// reports stay byte-reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl StatReport {
    fn new(suite: &str, config: &SimulationConfig, params: &ModelParams) -> Self {
        Self {
            suite: suite.to_string(),
            model: config.model,
            canonical: CanonicalEcho::from(params),
            n: config.n,
            paths: config.paths,
            master_seed: config.master_seed,
            grid: config.grid.clone(),
            sigma_level: config.sigma_level,
            checks: Vec::new(),
            runtime: Duration::ZERO,
        }
    }

    pub fn all_hard_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass || !c.hard)
    }

    pub fn warnings(&self) -> usize {
        self.checks.iter().filter(|c| !c.hard && !c.pass).count()
    }
}

/// KS pass threshold: the asymptotic 95% sampling band plus an allowance
/// for the lattice of the prelimit distribution.
fn ks_threshold(paths: usize, n: usize) -> f64 {
    1.36 / (paths as f64).sqrt() + 0.5 / (n as f64).sqrt()
}

fn sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values
}

fn clt_checks(
    config: &SimulationConfig,
    params: &ModelParams,
    stats: &SummaryStats,
    samples: &Samples,
) -> Result<Vec<Check>, McError> {
    let sl = config.sigma_level;
    let sigma2 = sigma2_ksum(params).sigma2;
    let chain = sigma2_chain(params);
    let paths = stats.endpoint.count() as f64;
    let mut checks = vec![
        Check::z_score("clt_mean", stats.endpoint.mean(), 0.0, stats.endpoint.mean_stderr(), sl),
        Check::z_score(
            "clt_variance",
            stats.endpoint.variance(),
            sigma2,
            stats.endpoint.variance_stderr(),
            sl,
        )
        .with_note(format!(
            "tabulated closed form; stationary window-chain value {chain:.9}"
        )),
        Check::z_score(
            "clt_skewness",
            stats.endpoint.skewness(),
            0.0,
            (6.0 / paths).sqrt(),
            sl,
        ),
        Check::z_score(
            "clt_excess_kurtosis",
            stats.endpoint.excess_kurtosis(),
            0.0,
            (24.0 / paths).sqrt(),
            sl,
        ),
    ];
    let standardized = sorted(
        samples
            .endpoint
            .iter()
            .map(|y| y / sigma2.sqrt())
            .collect(),
    );
    let d = ks_statistic(&standardized, standard_normal_cdf)?;
    checks.push(Check::upper("clt_ks", d, ks_threshold(config.paths, config.n)).with_note(
        "standardized by the tabulated sigma, not the sample variance".to_string(),
    ));
    let theta = params.theta();
    let s2_target = chain * (1.0 - theta) * (1.0 - theta);
    checks.push(
        Check::z_score(
            "clt_martingale_variance",
            stats.martingale.variance(),
            s2_target,
            stats.martingale.variance_stderr(),
            sl,
        )
        .with_note("target is the stationary mean of e(1-e)".to_string()),
    );
    let k = params.k() as f64;
    let gap_bound = theta * 2.0 * (k + 1.0) / (config.n as f64).sqrt() + 1e-12;
    checks.push(
        Check::upper("clt_martingale_gap", stats.mart_gap.mean(), gap_bound).with_note(
            "mean of |M_n - (1-theta)(S_n - n p)| / sqrt(n); deterministic bound".to_string(),
        ),
    );
    Ok(checks)
}

fn fclt_checks(config: &SimulationConfig, params: &ModelParams, stats: &SummaryStats) -> Vec<Check> {
    let sigma2 = sigma2_ksum(params).sigma2;
    let g = config.grid.len();
    let mut checks = Vec::new();
    for a in 0..g {
        for b in a..g {
            let cov = if a == b {
                stats.time[a].variance()
            } else {
                stats.cross[SummaryStats::pair_index(a, b, g)].covariance()
            };
            let t = config.grid[b];
            let ratio = cov * t / sigma2;
            let name = format!("fclt_cov_ratio(s={},t={})", config.grid[a], config.grid[b]);
            checks.push(Check::band(&name, ratio, 1.0, config.fclt_band));
        }
    }
    let paths = stats.endpoint.count() as f64;
    for (idx, &t) in config.grid.iter().enumerate() {
        checks.push(Check::z_score(
            &format!("fclt_skewness(t={t})"),
            stats.time[idx].skewness(),
            0.0,
            (6.0 / paths).sqrt(),
            config.sigma_level,
        ));
        checks.push(Check::z_score(
            &format!("fclt_excess_kurtosis(t={t})"),
            stats.time[idx].excess_kurtosis(),
            0.0,
            (24.0 / paths).sqrt(),
            config.sigma_level,
        ));
    }
    checks
}

fn com_checks(
    config: &SimulationConfig,
    params: &ModelParams,
    stats: &SummaryStats,
    samples: &Samples,
) -> Result<Vec<Check>, McError> {
    let sl = config.sigma_level;
    let p = params.p();
    let sqrt_n = (config.n as f64).sqrt();
    let limits = crate::closed_form::com_limits(params);
    let chain_third = sigma2_chain(params) / 3.0;
    let mean_cn = p / 2.0 + stats.com.mean() / sqrt_n;
    let mut checks = vec![
        Check::z_score(
            "com_mean",
            mean_cn,
            limits.mean_rate,
            stats.com.mean_stderr() / sqrt_n,
            sl,
        ),
        Check::z_score(
            "com_variance",
            stats.com.variance(),
            limits.sigma2,
            stats.com.variance_stderr(),
            sl,
        )
        .with_note(format!(
            "tabulated sigma2/3; stationary window-chain value {chain_third:.9}"
        )),
        Check::z_score("com_skewness", stats.com.skewness(), 0.0, (6.0 / stats.com.count() as f64).sqrt(), sl),
        Check::z_score(
            "com_excess_kurtosis",
            stats.com.excess_kurtosis(),
            0.0,
            (24.0 / stats.com.count() as f64).sqrt(),
            sl,
        ),
    ];
    let standardized = sorted(
        samples
            .com
            .iter()
            .map(|u| u / limits.sigma2.sqrt())
            .collect(),
    );
    let d = ks_statistic(&standardized, standard_normal_cdf)?;
    checks.push(Check::upper("com_ks", d, ks_threshold(config.paths, config.n)));
    if let ModelKind::Elephant { .. } = config.model {
        // On the +/-1 scale C_n/n has mean (n+1)/n (p - 1/2), exactly 0 at
        // the symmetric first step.
        let nf = config.n as f64;
        let est = 2.0 * mean_cn - (nf + 1.0) / (2.0 * nf);
        checks.push(
            Check::z_score(
                "com_mean_pm1",
                est,
                0.0,
                2.0 * stats.com.mean_stderr() / sqrt_n,
                sl,
            )
            .with_note("center of mass on the +/-1 position scale".to_string()),
        );
    }
    Ok(checks)
}

fn martingale_checks(params: &ModelParams, audit_n: usize) -> Result<Vec<Check>, McError> {
    let audit = exact_martingale_audit(params, audit_n)?;
    Ok(vec![
        Check::upper(
            "martingale_conditional_mean",
            audit.max_abs_conditional_mean,
            1e-14,
        )
        .with_note(format!(
            "exhaustive over {} states, horizon {}",
            audit.states_checked, audit.steps_covered
        )),
        Check::upper("martingale_second_moment", audit.sup_second_moment, 0.25 + 1e-12).with_note(
            format!("attained at e = {:.9}", audit.argmax_second_e),
        ),
        Check::upper(
            "martingale_fourth_moment",
            audit.sup_fourth_moment,
            1.0 / 12.0 + 1e-12,
        )
        .with_note(format!("attained at e = {:.9}", audit.argmax_fourth_e)),
    ])
}

fn mapping_checks(config: &SimulationConfig, params: &ModelParams, dp_n: usize) -> Result<Vec<Check>, McError> {
    // For the canonical presentation, exercise the mapping through the
    // inverse-constructed minimal presentation; it exists for every valid
    // (p, theta): q = p(1-theta), r = theta + q.
    let (direct_kind, derived_note) = match config.model {
        ModelKind::KSum { p, theta, k } => {
            let q = p * (1.0 - theta);
            let r = theta + q;
            (
                ModelKind::Minimal { r, q, k },
                Some(format!("derived minimal presentation r={r:.9}, q={q:.9}")),
            )
        }
        other => (other, None),
    };
    let rule = StepRule::direct(&direct_kind)?;
    let budget = Budget::default();
    let direct_pmf = exact_pmf_rule(&rule, dp_n, &budget)?;
    let canonical_pmf = exact_pmf_rule(&StepRule::Canonical(*params), dp_n, &budget)?;
    let max_diff = direct_pmf
        .probs
        .iter()
        .zip(&canonical_pmf.probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let mut note = format!(
        "exact pmf at n={dp_n}; canonical (p={:.9}, theta={:.9}, k={})",
        params.p(),
        params.theta(),
        params.k()
    );
    if let Some(extra) = derived_note {
        note = format!("{note}; {extra}");
    }
    let mut checks =
        vec![Check::upper("mapping_pmf_direct_vs_canonical", max_diff, 1e-12).with_note(note)];
    if let ModelKind::Elephant { .. } = config.model {
        // The +/-1 support view must be an exact re-indexing of the 0/1 pmf.
        let support = canonical_pmf.support_pm1();
        let max_reflection_diff = support
            .iter()
            .enumerate()
            .map(|(s, &(pos, prob))| {
                let expected_pos = 2 * s as i64 - dp_n as i64;
                if pos == expected_pos {
                    (prob - canonical_pmf.probs[s]).abs()
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0f64, f64::max);
        checks.push(
            Check::upper("mapping_elephant_reflection", max_reflection_diff, 0.0)
                .with_note("position pmf is the success pmf re-indexed by 2s - n".to_string()),
        );
    }
    Ok(checks)
}

fn lil_checks(config: &SimulationConfig, params: &ModelParams) -> Result<Vec<Check>, McError> {
    if config.n < 16 {
        return Err(McError::Config(format!(
            "lil requires n >= 16 (log log m must be positive well away from 0), got {}",
            config.n
        )));
    }
    let sigma = sigma2_ksum(params).sigma2.sqrt();
    let p = params.p();
    let n = config.n;
    // envelope denominators sqrt(2 m ln ln m), shared across paths
    let denom: Vec<f64> = (0..=n)
        .map(|m| {
            if m < 16 {
                f64::INFINITY
            } else {
                (2.0 * m as f64 * (m as f64).ln().ln()).sqrt()
            }
        })
        .collect();
    let batches = config.paths.div_ceil(PATHS_PER_BATCH);
    let per_batch: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let lo = batch * PATHS_PER_BATCH;
            let hi = (lo + PATHS_PER_BATCH).min(config.paths);
            let mut out = Vec::with_capacity(hi - lo);
            for idx in lo..hi {
                let mut rng = path_rng(config.master_seed, config.path_offset + idx as u64);
                let mut window = WindowState::new(params.k());
                let mut s: u64 = 0;
                let mut best = f64::NEG_INFINITY;
                for i in 1..=n {
                    let e = step_probability(&window, params);
                    let x = u8::from(rng.random::<f64>() < e);
                    s += u64::from(x);
                    window.push(x);
                    if i >= 16 {
                        let val = (s as f64 - i as f64 * p) / denom[i];
                        if val > best {
                            best = val;
                        }
                    }
                }
                out.push(best / sigma);
            }
            out
        })
        .collect();
    let mut ratios: Vec<f64> = per_batch.into_iter().flatten().collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = ratios[ratios.len() / 2];
    let tail = ratios.iter().filter(|&&r| r > 1.5).count() as f64 / ratios.len() as f64;
    Ok(vec![
        Check::band("lil_median", median, 1.0, 0.5)
            .soft()
            .with_note("qualitative envelope; warnings only".to_string()),
        Check::upper("lil_tail_fraction", tail, 0.05)
            .soft()
            .with_note("fraction of paths with max ratio above 1.5".to_string()),
    ])
}

/// Endpoint distribution report: mean, variance against the tabulated
/// sigma2, shape moments, and the KS distance of the standardized sample.
pub fn clt_report(config: &SimulationConfig) -> Result<StatReport, McError> {
    let start = Instant::now();
    let params = canonical_params(&config.model)?;
    let (stats, samples) = run_with_samples(config)?;
    let mut report = StatReport::new("clt", config, &params);
    report.checks = clt_checks(config, &params, &stats, &samples)?;
    report.runtime = start.elapsed();
    Ok(report)
}

/// Covariance-structure report across the time grid, plus marginal
/// normality diagnostics per grid time.
pub fn fclt_report(config: &SimulationConfig) -> Result<StatReport, McError> {
    let start = Instant::now();
    let params = canonical_params(&config.model)?;
    let (stats, _) = run_with_samples(config)?;
    let mut report = StatReport::new("fclt", config, &params);
    report.checks = fclt_checks(config, &params, &stats);
    report.runtime = start.elapsed();
    Ok(report)
}

/// Center-of-mass report: mean rate, limit variance, and normality
/// diagnostics.
pub fn com_report(config: &SimulationConfig) -> Result<StatReport, McError> {
    let start = Instant::now();
    let params = canonical_params(&config.model)?;
    let (stats, samples) = run_with_samples(config)?;
    let mut report = StatReport::new("com", config, &params);
    report.checks = com_checks(config, &params, &stats, &samples)?;
    report.runtime = start.elapsed();
    Ok(report)
}

/// Exhaustive martingale-moment audit report (exact, no sampling).
pub fn martingale_report(config: &SimulationConfig) -> Result<StatReport, McError> {
    let start = Instant::now();
    let params = canonical_params(&config.model)?;
    let mut report = StatReport::new("martingale", config, &params);
    report.checks = martingale_checks(&params, config.n)?;
    report.runtime = start.elapsed();
    Ok(report)
}

/// Exact mapping-equivalence report between a presentation's direct
/// conditional probabilities and its canonical form.
pub fn mapping_report(config: &SimulationConfig) -> Result<StatReport, McError> {
    let start = Instant::now();
    let params = canonical_params(&config.model)?;
    let mut report = StatReport::new("mapping", config, &params);
    report.checks = mapping_checks(config, &params, config.n)?;
    report.runtime = start.elapsed();
    Ok(report)
}

/// Iterated-logarithm envelope report. Qualitative: its checks are soft
/// and never gate a run.
pub fn lil_report(config: &SimulationConfig) -> Result<StatReport, McError> {
    let start = Instant::now();
    let params = canonical_params(&config.model)?;
    config.validate()?;
    let mut report = StatReport::new("lil", config, &params);
    report.checks = lil_checks(config, &params)?;
    report.runtime = start.elapsed();
    Ok(report)
}

/// A verification suite selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Clt,
    Fclt,
    Com,
    Lil,
    Martingale,
    Mapping,
    All,
}

impl Suite {
    pub const ALL_NAMES: [&'static str; 7] =
        ["clt", "fclt", "com", "lil", "martingale", "mapping", "all"];
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "clt" => Suite::Clt,
            "fclt" => Suite::Fclt,
            "com" => Suite::Com,
            "lil" => Suite::Lil,
            "martingale" => Suite::Martingale,
            "mapping" => Suite::Mapping,
            "all" => Suite::All,
            other => return Err(format!("unknown suite '{other}'")),
        })
    }
}

/// Runs a suite (or all of them) and returns one report per sub-suite.
///
/// `all` shares a single simulation pass across the clt, fclt, and com
/// reports, caps the martingale audit horizon at 1000 steps and the
/// mapping pmf horizon at 200 (both noted in the checks; the state space
/// saturates at `k + 2` steps, so nothing is lost), and appends the
/// soft-check iterated-logarithm report.
pub fn run_suite(config: &SimulationConfig, suite: Suite) -> Result<Vec<StatReport>, McError> {
    match suite {
        Suite::Clt => Ok(vec![clt_report(config)?]),
        Suite::Fclt => Ok(vec![fclt_report(config)?]),
        Suite::Com => Ok(vec![com_report(config)?]),
        Suite::Lil => Ok(vec![lil_report(config)?]),
        Suite::Martingale => Ok(vec![martingale_report(config)?]),
        Suite::Mapping => Ok(vec![mapping_report(config)?]),
        Suite::All => {
            let params = canonical_params(&config.model)?;
            let start = Instant::now();
            let (stats, samples) = run_with_samples(config)?;
            let shared = start.elapsed();

            let mut reports = Vec::with_capacity(6);
            let mut clt = StatReport::new("clt", config, &params);
            clt.checks = clt_checks(config, &params, &stats, &samples)?;
            clt.runtime = shared;
            reports.push(clt);

            let mut fclt = StatReport::new("fclt", config, &params);
            fclt.checks = fclt_checks(config, &params, &stats);
            reports.push(fclt);

            let mut com = StatReport::new("com", config, &params);
            com.checks = com_checks(config, &params, &stats, &samples)?;
            reports.push(com);

            let t = Instant::now();
            let mut mart = StatReport::new("martingale", config, &params);
            mart.checks = martingale_checks(&params, config.n.min(1000))?;
            mart.runtime = t.elapsed();
            reports.push(mart);

            let t = Instant::now();
            let mut mapping = StatReport::new("mapping", config, &params);
            mapping.checks = mapping_checks(config, &params, config.n.min(200))?;
            mapping.runtime = t.elapsed();
            reports.push(mapping);

            let t = Instant::now();
            let mut lil = StatReport::new("lil", config, &params);
            lil.checks = lil_checks(config, &params)?;
            lil.runtime = t.elapsed();
            reports.push(lil);

            Ok(reports)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iid_config(n: usize, paths: usize, seed: u64) -> SimulationConfig {
        SimulationConfig::new(
            ModelKind::KSum { p: 0.5, theta: 0.0, k: 1 },
            n,
            paths,
            seed,
        )
        .with_grid(vec![0.25, 0.5, 1.0])
    }

    #[test]
    fn config_validation() {
        let base = iid_config(100, 10, 1);
        assert!(base.validate().is_ok());
        let mut bad = base.clone();
        bad.grid = vec![];
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.grid = vec![0.5, 0.5];
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.grid = vec![0.5, 1.5];
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.grid = vec![0.001, 1.0]; // floor(100 * 0.001) = 0
        assert!(bad.validate().is_err());
        let mut bad = base;
        bad.paths = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_path_batch_matches_direct_simulation() {
        let cfg = iid_config(64, 1, 9);
        let stats = run_batch(&cfg).unwrap();
        assert_eq!(stats.count(), 1);
        // recompute the endpoint statistic directly
        let params = canonical_params(&cfg.model).unwrap();
        let path = crate::model::simulate_path(&params, 64, &mut path_rng(9, 0));
        let y = 8.0 * (f64::from(path.total()) / 64.0 - 0.5);
        assert!((stats.endpoint.mean() - y).abs() <= 1e-12);
    }

    #[test]
    fn shards_merge_to_the_full_run() {
        let cfg = iid_config(50, 2000, 123);
        let full = run_batch(&cfg).unwrap();

        let mut first = cfg.clone();
        first.paths = 700; // deliberately not a batch multiple
        let mut second = cfg.clone();
        second.paths = 1300;
        second.path_offset = 700;
        let mut merged = run_batch(&first).unwrap();
        merged.merge(&run_batch(&second).unwrap());

        assert_eq!(merged.count(), full.count());
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-30);
        assert!(rel(merged.endpoint.mean(), full.endpoint.mean()) <= 1e-10);
        assert!(rel(merged.endpoint.variance(), full.endpoint.variance()) <= 1e-10);
        assert!(rel(merged.com.variance(), full.com.variance()) <= 1e-10);
        assert!(rel(merged.cross[0].covariance(), full.cross[0].covariance()) <= 1e-10);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = iid_config(200, 3000, 77);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_with_samples(&cfg).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_with_samples(&cfg).unwrap());
        assert_eq!(one.0, four.0);
        assert_eq!(one.1.endpoint, four.1.endpoint);
        assert_eq!(one.1.com, four.1.com);
    }

    #[test]
    fn iid_variance_matches_p_one_minus_p() {
        let cfg = iid_config(400, 20_000, 2024);
        let stats = run_batch(&cfg).unwrap();
        let est = stats.endpoint.variance();
        let se = stats.endpoint.variance_stderr();
        assert!((est - 0.25).abs() <= 4.0 * se, "est={est} se={se}");
    }

    #[test]
    fn clt_report_passes_on_iid_baseline() {
        let cfg = iid_config(1000, 20_000, 31);
        let report = clt_report(&cfg).unwrap();
        assert!(
            report.all_hard_pass(),
            "failing checks: {:?}",
            report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| &c.name)
                .collect::<Vec<_>>()
        );
        // theta = 0: the martingale gap is identically zero
        let gap = report
            .checks
            .iter()
            .find(|c| c.name == "clt_martingale_gap")
            .unwrap();
        assert_eq!(gap.estimate, 0.0);
    }

    #[test]
    fn fclt_report_iid_covariance_structure() {
        let cfg = iid_config(2000, 20_000, 57);
        let report = fclt_report(&cfg).unwrap();
        assert!(
            report.all_hard_pass(),
            "failing: {:?}",
            report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .collect::<Vec<_>>()
        );
        // Cov(0.5, 1.0) * 1.0 / sigma2 near 1
        let c = report
            .checks
            .iter()
            .find(|c| c.name == "fclt_cov_ratio(s=0.5,t=1)")
            .unwrap();
        assert!((c.estimate - 1.0).abs() <= 0.05);
    }

    #[test]
    fn com_report_iid_baseline() {
        // mean bias p/(2n) must stay well under the 4-SE band at these sizes
        let cfg = iid_config(4000, 10_000, 404);
        let report = com_report(&cfg).unwrap();
        assert!(
            report.all_hard_pass(),
            "failing: {:?}",
            report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn com_report_elephant_adds_pm1_check() {
        let cfg = SimulationConfig::new(ModelKind::Elephant { alpha: 0.6, k: 2 }, 500, 4000, 8)
            .with_grid(vec![0.5, 1.0]);
        let report = com_report(&cfg).unwrap();
        assert!(report.checks.iter().any(|c| c.name == "com_mean_pm1"));
    }

    #[test]
    fn martingale_gap_shrinks_with_horizon() {
        let model = ModelKind::KSum { p: 0.5, theta: 0.5, k: 2 };
        let short = run_batch(&SimulationConfig::new(model, 500, 2000, 5).with_grid(vec![1.0]))
            .unwrap()
            .mart_gap
            .mean();
        let long = run_batch(&SimulationConfig::new(model, 2000, 2000, 5).with_grid(vec![1.0]))
            .unwrap()
            .mart_gap
            .mean();
        assert!(long < short, "gap should shrink: {long} vs {short}");
        assert!(short <= 0.5 * 2.0 * 3.0 / (500f64).sqrt());
    }

    #[test]
    fn mapping_report_minimal_passes() {
        let cfg = SimulationConfig::new(ModelKind::Minimal { r: 0.6, q: 0.3, k: 2 }, 30, 1, 1)
            .with_grid(vec![1.0]);
        let report = mapping_report(&cfg).unwrap();
        assert!(report.all_hard_pass());
    }

    #[test]
    fn mapping_report_ksum_derives_a_presentation() {
        let cfg = SimulationConfig::new(ModelKind::KSum { p: 0.37, theta: 0.41, k: 3 }, 40, 1, 1)
            .with_grid(vec![1.0]);
        let report = mapping_report(&cfg).unwrap();
        assert!(report.all_hard_pass());
        assert!(report.checks[0].note.as_ref().unwrap().contains("derived minimal"));
    }

    #[test]
    fn lil_report_refuses_tiny_horizons() {
        let cfg = iid_config(10, 100, 1);
        assert!(matches!(lil_report(&cfg), Err(McError::Config(_))));
    }

    #[test]
    fn lil_checks_are_soft() {
        let mut cfg = iid_config(2000, 200, 13);
        cfg.grid = vec![1.0];
        let report = lil_report(&cfg).unwrap();
        assert!(report.checks.iter().all(|c| !c.hard));
    }

    #[test]
    fn suite_all_is_consistent_with_individual_suites() {
        let mut cfg = iid_config(300, 2000, 99);
        cfg.grid = vec![0.5, 1.0];
        let all = run_suite(&cfg, Suite::All).unwrap();
        let clt_alone = run_suite(&cfg, Suite::Clt).unwrap();
        let clt_in_all = all.iter().find(|r| r.suite == "clt").unwrap();
        assert_eq!(clt_in_all.checks, clt_alone[0].checks);
    }
}
