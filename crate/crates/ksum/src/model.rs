//! Model parameters, the memory-window state, one-step conditional
//! probabilities, path simulation, martingale increments, and the center of
//! mass.
//!
//! The sequence is Bernoulli with reinforcement: trial `i` succeeds with
//! probability `(1-theta)*p + theta * (mean of the last min(i-1, k)
//! outcomes)`, with the very first trial succeeding with probability `p`.
//! Every conditional probability therefore lies in
//! `[(1-theta)*p, (1-theta)*p + theta]`, strictly inside `(0, 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LengthMismatch, ParamError};

/// Canonical parameter triple `(p, theta, k)`.
///
/// Construction validates `0 < p < 1`, `0 <= theta < 1`, `k >= 1`; the
/// fields stay private so a value of this type always satisfies those
/// invariants. Degenerate endpoints are rejected, not clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    p: f64,
    theta: f64,
    k: usize,
}

impl ModelParams {
    pub fn new(p: f64, theta: f64, k: usize) -> Result<Self, ParamError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ParamError::P(p));
        }
        if !(theta >= 0.0 && theta < 1.0) {
            return Err(ParamError::Theta(theta));
        }
        if k == 0 {
            return Err(ParamError::K);
        }
        Ok(Self { p, theta, k })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Smallest attainable one-step probability, `(1-theta)*p`.
    pub fn prob_floor(&self) -> f64 {
        (1.0 - self.theta) * self.p
    }

    /// Largest attainable one-step probability, `(1-theta)*p + theta`.
    pub fn prob_ceil(&self) -> f64 {
        (1.0 - self.theta) * self.p + self.theta
    }
}

/// A model in one of its three presentations.
///
/// `Minimal` repeats a uniformly chosen recent outcome with probability `r`
/// if it was a success and `q` if it was a failure; `Elephant` repeats a
/// uniformly chosen recent +/-1 step with probability `alpha` and reverses
/// it otherwise. Both reduce to the canonical triple via
/// [`canonical_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    KSum { p: f64, theta: f64, k: usize },
    Minimal { r: f64, q: f64, k: usize },
    Elephant { alpha: f64, k: usize },
}

impl ModelKind {
    pub fn k(&self) -> usize {
        match *self {
            ModelKind::KSum { k, .. }
            | ModelKind::Minimal { k, .. }
            | ModelKind::Elephant { k, .. } => k,
        }
    }

    pub fn canonical(&self) -> Result<ModelParams, ParamError> {
        canonical_params(self)
    }
}

/// Maps any presentation onto the canonical `(p, theta, k)` triple.
///
/// `KSum` passes through; `Minimal(r, q, k)` maps to
/// `(q / (1 - (r - q)), r - q, k)`; `Elephant(alpha, k)` maps to
/// `(1/2, 2*alpha - 1, k)`. Variant-specific invariants are checked first
/// so the error names what the caller actually supplied.
pub fn canonical_params(kind: &ModelKind) -> Result<ModelParams, ParamError> {
    match *kind {
        ModelKind::KSum { p, theta, k } => ModelParams::new(p, theta, k),
        ModelKind::Minimal { r, q, k } => {
            if !(r > 0.0 && r < 1.0 && q > 0.0 && q < 1.0) {
                return Err(ParamError::ReinforcementProbs { r, q });
            }
            let theta = r - q;
            if !(theta >= 0.0 && theta < 1.0) {
                return Err(ParamError::ReinforcementDrift(theta));
            }
            ModelParams::new(q / (1.0 - theta), theta, k)
        }
        ModelKind::Elephant { alpha, k } => {
            if !(alpha >= 0.5 && alpha < 1.0) {
                return Err(ParamError::Alpha(alpha));
            }
            ModelParams::new(0.5, 2.0 * alpha - 1.0, k)
        }
    }
}

/// The most recent `min(i-1, k)` outcomes plus the index of the next trial.
///
/// Backed by a fixed-capacity ring of `k` bits and an incrementally
/// maintained window sum, so a push is O(1) regardless of `k`.
#[derive(Debug, Clone)]
pub struct WindowState {
    ring: Vec<u8>,
    head: usize,
    len: usize,
    sum: u32,
    next_index: u64,
}

impl WindowState {
    /// Empty window for a model with memory length `k` (the state before
    /// trial 1).
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "memory length k must be at least 1");
        Self {
            ring: vec![0; k],
            head: 0,
            len: 0,
            sum: 0,
            next_index: 1,
        }
    }

    /// Records the outcome of the trial at [`Self::step_index`], evicting
    /// the oldest outcome once the window is full.
    pub fn push(&mut self, outcome: u8) {
        debug_assert!(outcome <= 1);
        let k = self.ring.len();
        if self.len == k {
            self.sum -= u32::from(self.ring[self.head]);
            self.ring[self.head] = outcome;
            self.head = (self.head + 1) % k;
        } else {
            self.ring[(self.head + self.len) % k] = outcome;
            self.len += 1;
        }
        self.sum += u32::from(outcome);
        self.next_index += 1;
    }

    /// Sum of the outcomes currently in the window.
    pub fn window_sum(&self) -> u32 {
        self.sum
    }

    /// Number of outcomes in the window, `min(i-1, k)`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of the next trial (1-based).
    pub fn step_index(&self) -> u64 {
        self.next_index
    }

    /// Memory length `k`.
    pub fn capacity(&self) -> usize {
        self.ring.len()
    }

    /// Window contents, oldest first.
    pub fn bits(&self) -> Vec<u8> {
        let k = self.ring.len();
        (0..self.len).map(|j| self.ring[(self.head + j) % k]).collect()
    }
}

/// Conditional success probability of the next trial, unified form:
/// `p` when the window is empty, otherwise
/// `(1-theta)*p + theta * window_sum / window_len`.
///
/// Since the window length is `min(i-1, k)`, this evaluates both branches
/// of the two-regime definition with one expression; see
/// [`step_probability_two_branch`] for the branch-explicit reference form,
/// which agrees bit for bit.
pub fn step_probability(window: &WindowState, params: &ModelParams) -> f64 {
    debug_assert_eq!(window.capacity(), params.k);
    if window.is_empty() {
        return params.p;
    }
    (1.0 - params.theta) * params.p
        + params.theta * (f64::from(window.sum) / window.len as f64)
}

/// Branch-explicit reference form of [`step_probability`]: divisor `i-1`
/// while `2 <= i <= k+1`, divisor `k` from `i >= k+2` on. Kept as an
/// independent evaluation route for tests.
pub fn step_probability_two_branch(window: &WindowState, params: &ModelParams) -> f64 {
    debug_assert_eq!(window.capacity(), params.k);
    let i = window.next_index;
    if i == 1 {
        return params.p;
    }
    let divisor = if i <= params.k as u64 + 1 {
        (i - 1) as f64
    } else {
        params.k as f64
    };
    (1.0 - params.theta) * params.p + params.theta * (f64::from(window.sum) / divisor)
}

/// A one-step conditional probability rule over window statistics.
///
/// `Canonical` evaluates the `(p, theta, k)` form. The two `*Direct`
/// variants evaluate the reinforced-walk presentations exactly as written
/// (`q + (r-q) * mean` and `(1 + (2a-1) * spin-mean) / 2`), which is a
/// different floating-point route from the canonical one; the exact oracle
/// uses them to check the presentations against the canonical model
/// without sharing arithmetic. The first step of a direct rule uses the
/// mapped canonical `p`, so the equivalence holds from trial 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Canonical(ModelParams),
    MinimalDirect { r: f64, q: f64, k: usize },
    ElephantDirect { alpha: f64, k: usize },
}

impl StepRule {
    /// Direct rule for a model presentation (`KSum` falls back to the
    /// canonical rule, which is its direct form).
    pub fn direct(kind: &ModelKind) -> Result<Self, ParamError> {
        // validate via the canonical mapping, then keep the raw parameters
        let params = canonical_params(kind)?;
        Ok(match *kind {
            ModelKind::KSum { .. } => StepRule::Canonical(params),
            ModelKind::Minimal { r, q, k } => StepRule::MinimalDirect { r, q, k },
            ModelKind::Elephant { alpha, k } => StepRule::ElephantDirect { alpha, k },
        })
    }

    pub fn k(&self) -> usize {
        match *self {
            StepRule::Canonical(p) => p.k(),
            StepRule::MinimalDirect { k, .. } | StepRule::ElephantDirect { k, .. } => k,
        }
    }

    pub fn canonical(&self) -> Result<ModelParams, ParamError> {
        match *self {
            StepRule::Canonical(p) => Ok(p),
            StepRule::MinimalDirect { r, q, k } => {
                canonical_params(&ModelKind::Minimal { r, q, k })
            }
            StepRule::ElephantDirect { alpha, k } => {
                canonical_params(&ModelKind::Elephant { alpha, k })
            }
        }
    }

    /// Success probability given the window summary `(len, sum)`;
    /// `len == 0` is the first trial.
    pub fn prob(&self, window_len: usize, window_sum: u32) -> f64 {
        match *self {
            StepRule::Canonical(params) => {
                if window_len == 0 {
                    params.p
                } else {
                    (1.0 - params.theta) * params.p
                        + params.theta * (f64::from(window_sum) / window_len as f64)
                }
            }
            StepRule::MinimalDirect { r, q, .. } => {
                if window_len == 0 {
                    q / (1.0 - (r - q))
                } else {
                    q + (r - q) * (f64::from(window_sum) / window_len as f64)
                }
            }
            StepRule::ElephantDirect { alpha, .. } => {
                if window_len == 0 {
                    0.5
                } else {
                    let spin_sum = 2.0 * f64::from(window_sum) - window_len as f64;
                    0.5 * (1.0 + (2.0 * alpha - 1.0) * (spin_sum / window_len as f64))
                }
            }
        }
    }
}

/// A realized outcome sequence with its running success counts and center
/// of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Outcomes, each 0 or 1.
    pub outcomes: Vec<u8>,
    /// `prefix_sums[i] = S_{i+1}`, the successes among the first `i+1` trials.
    pub prefix_sums: Vec<u32>,
    /// `C_n = (1/n) * sum_i S_i`.
    pub center_of_mass: f64,
}

impl Path {
    pub fn from_outcomes(outcomes: Vec<u8>) -> Self {
        let mut prefix_sums = Vec::with_capacity(outcomes.len());
        let mut s = 0u32;
        for &x in &outcomes {
            debug_assert!(x <= 1);
            s += u32::from(x);
            prefix_sums.push(s);
        }
        let mut path = Self {
            outcomes,
            prefix_sums,
            center_of_mass: 0.0,
        };
        path.center_of_mass = center_of_mass(&path);
        path
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    /// `S_n`, the total number of successes.
    pub fn total(&self) -> u32 {
        self.prefix_sums.last().copied().unwrap_or(0)
    }
}

/// Center of mass `(1/n) * sum_{i=1..n} S_i`, accumulated in integer
/// arithmetic with a single final division.
pub fn center_of_mass(path: &Path) -> f64 {
    if path.prefix_sums.is_empty() {
        return 0.0;
    }
    let total: u64 = path.prefix_sums.iter().map(|&s| u64::from(s)).sum();
    total as f64 / path.prefix_sums.len() as f64
}

/// Success-count value re-expressed on the +/-1 scale, `2s - n`. This is
/// the only place the elephant presentation's spin encoding enters:
/// simulation and the oracle work on 0/1 outcomes throughout.
pub fn spin_position(successes: u64, n: u64) -> i64 {
    2 * successes as i64 - n as i64
}

/// Deterministic per-path random stream.
///
/// The master seed is expanded into the 256-bit ChaCha8 key through
/// rand's documented SplitMix64 scheme (`seed_from_u64`), and the path
/// index selects one of the 2^64 independent ChaCha streams. No two paths
/// share state, and the stream for `(master_seed, path_index)` is the same
/// on every run and thread layout.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Samples a path of length `n`: one uniform draw per trial, compared
/// against the unified step probability.
pub fn simulate_path<R: Rng>(params: &ModelParams, n: usize, rng: &mut R) -> Path {
    let mut window = WindowState::new(params.k);
    let mut outcomes = Vec::with_capacity(n);
    for _ in 0..n {
        let e = step_probability(&window, params);
        let x = u8::from(rng.random::<f64>() < e);
        outcomes.push(x);
        window.push(x);
    }
    Path::from_outcomes(outcomes)
}

/// Martingale difference decomposition of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    /// `L_i = X_i - e_{i-1}` where `e_{i-1}` is the conditional success
    /// probability before trial `i`.
    pub increments: Vec<f64>,
    /// `M_i = L_1 + ... + L_i`.
    pub partial_sums: Vec<f64>,
    /// Predictable quadratic variation: running sum of
    /// `e_{i-1} * (1 - e_{i-1})`.
    pub quad_variation: Vec<f64>,
}

/// Recomputes the conditional probabilities along `path` and returns the
/// martingale increments, their partial sums, and the predictable
/// quadratic variation. Purely arithmetic; the caller is responsible for
/// `path` having been generated under `params`.
pub fn martingale_increments(
    path: &Path,
    params: &ModelParams,
) -> Result<MartingalePath, LengthMismatch> {
    if path.outcomes.len() != path.prefix_sums.len() {
        return Err(LengthMismatch {
            outcomes: path.outcomes.len(),
            prefix_sums: path.prefix_sums.len(),
        });
    }
    let n = path.outcomes.len();
    let mut window = WindowState::new(params.k);
    let mut increments = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n);
    let mut quad_variation = Vec::with_capacity(n);
    let mut m = 0.0;
    let mut qv = 0.0;
    for &x in &path.outcomes {
        let e = step_probability(&window, params);
        let l = f64::from(x) - e;
        m += l;
        qv += e * (1.0 - e);
        increments.push(l);
        partial_sums.push(m);
        quad_variation.push(qv);
        window.push(x);
    }
    Ok(MartingalePath {
        increments,
        partial_sums,
        quad_variation,
    })
}

/// Conditional second moment of a martingale increment at conditional
/// probability `e`: `e(1-e)`, at most 1/4.
pub fn increment_second_moment(e: f64) -> f64 {
    e * (1.0 - e)
}

/// Conditional fourth moment of a martingale increment at conditional
/// probability `e`: `e - 4e^2 + 6e^3 - 3e^4`, at most 1/12.
pub fn increment_fourth_moment(e: f64) -> f64 {
    e * (1.0 + e * (-4.0 + e * (6.0 - 3.0 * e)))
}
