//! Exact distribution of the success count by dynamic programming over
//! memory-window states, plus exact moment trajectories and an exhaustive
//! martingale-moment audit. Ground truth for the small-instance checks.

use serde::Serialize;

use crate::error::OracleError;
use crate::model::{
    increment_fourth_moment, increment_second_moment, spin_position, ModelParams, StepRule,
};

/// Admissible work for one oracle query. The sweep touches roughly
/// `2^k * n^2` transitions, so the defaults refuse anything past `k = 16`
/// or an estimated 1e10 transitions.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_k: usize,
    pub max_transitions: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_k: 16,
            max_transitions: 1e10,
        }
    }
}

impl Budget {
    fn check(&self, k: usize, n: usize) -> Result<(), OracleError> {
        if n == 0 {
            return Err(OracleError::EmptyHorizon);
        }
        let estimated = (k.min(60) as f64).exp2() * (n as f64) * (n as f64);
        if k > self.max_k || estimated > self.max_transitions {
            return Err(OracleError::BudgetExceeded {
                k,
                n,
                estimated_transitions: estimated,
                max_transitions: self.max_transitions,
                max_k: self.max_k,
            });
        }
        Ok(())
    }
}

/// Exact probability mass function of the success count at a horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    pub n: usize,
    /// `probs[s] = P(S_n = s)`, length `n + 1`.
    pub probs: Vec<f64>,
}

impl Pmf {
    /// Total mass; kept un-renormalized so drift away from 1 stays visible
    /// as an error signal.
    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, &p)| s as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(s, &p)| (s as f64) * (s as f64) * p)
            .sum();
        second - mean * mean
    }

    /// The same distribution on the +/-1 position scale: pairs
    /// `(2s - n, P(S_n = s))`. A pure re-indexing, exact by construction.
    pub fn support_pm1(&self) -> Vec<(i64, f64)> {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, &p)| (spin_position(s as u64, self.n as u64), p))
            .collect()
    }
}

/// First two moments of a pmf.
pub fn exact_moments(pmf: &Pmf) -> (f64, f64) {
    (pmf.mean(), pmf.variance())
}

/// Forward sweep over the window-state table.
///
/// The table at step `i` (after `i` trials) is dense over
/// `(mask, s)` with `mask` packing the last `min(i, k)` outcomes (bit 0
/// oldest) and `s` the running success count; index `mask * (i+1) + s`.
/// While the window is still growing the masks keep their variable width,
/// so the early-regime divisor is the true window length. `visit` sees the
/// table after every step. Mass is never renormalized.
fn forward_sweep<F: FnMut(usize, usize, &[f64])>(
    rule: &StepRule,
    n: usize,
    budget: &Budget,
    mut visit: F,
) -> Result<Vec<f64>, OracleError> {
    let k = rule.k();
    budget.check(k, n)?;
    let mut cur = vec![1.0f64];
    for i in 1..=n {
        let width = (i - 1).min(k);
        let next_width = i.min(k);
        let mut next = vec![0.0f64; (1usize << next_width) * (i + 1)];
        let probs_by_sum: Vec<f64> = (0..=width)
            .map(|sum| rule.prob(width, sum as u32))
            .collect();
        for mask in 0..(1usize << width) {
            let e = probs_by_sum[(mask as u32).count_ones() as usize];
            let (mask0, mask1) = if width < k {
                (mask, mask | (1 << width))
            } else {
                (mask >> 1, (mask >> 1) | (1 << (k - 1)))
            };
            let row = &cur[mask * i..mask * i + i];
            let base0 = mask0 * (i + 1);
            let base1 = mask1 * (i + 1);
            for (s, &m) in row.iter().enumerate() {
                next[base1 + s + 1] += m * e;
                next[base0 + s] += m * (1.0 - e);
            }
        }
        visit(i, next_width, &next);
        cur = next;
    }
    Ok(cur)
}

fn marginal_over_masks(table: &[f64], width: usize, i: usize) -> Vec<f64> {
    let mut probs = vec![0.0f64; i + 1];
    for mask in 0..(1usize << width) {
        let row = &table[mask * (i + 1)..(mask + 1) * (i + 1)];
        for (s, &m) in row.iter().enumerate() {
            probs[s] += m;
        }
    }
    probs
}

/// Exact pmf of the success count after `n` trials under an arbitrary step
/// rule, within `budget`.
pub fn exact_pmf_rule(rule: &StepRule, n: usize, budget: &Budget) -> Result<Pmf, OracleError> {
    let k = rule.k();
    let final_table = forward_sweep(rule, n, budget, |_, _, _| {})?;
    let width = n.min(k);
    Ok(Pmf {
        n,
        probs: marginal_over_masks(&final_table, width, n),
    })
}

/// Exact pmf of the success count under the canonical rule, default budget.
pub fn exact_pmf(params: &ModelParams, n: usize) -> Result<Pmf, OracleError> {
    exact_pmf_rule(&StepRule::Canonical(*params), n, &Budget::default())
}

/// `Var(S_i) / i` for every `i = 1..n_max`, from one incremental sweep.
pub fn variance_trajectory_rule(
    rule: &StepRule,
    n_max: usize,
    budget: &Budget,
) -> Result<Vec<f64>, OracleError> {
    let mut out = Vec::with_capacity(n_max);
    forward_sweep(rule, n_max, budget, |i, width, table| {
        let mut mean = 0.0f64;
        let mut second = 0.0f64;
        for mask in 0..(1usize << width) {
            let row = &table[mask * (i + 1)..(mask + 1) * (i + 1)];
            for (s, &m) in row.iter().enumerate() {
                let sf = s as f64;
                mean += sf * m;
                second += sf * sf * m;
            }
        }
        out.push((second - mean * mean) / i as f64);
    })?;
    Ok(out)
}

/// Canonical-rule variance trajectory with the default budget.
pub fn variance_trajectory(params: &ModelParams, n_max: usize) -> Result<Vec<f64>, OracleError> {
    variance_trajectory_rule(&StepRule::Canonical(*params), n_max, &Budget::default())
}

/// Result of exhaustively auditing the martingale increment moments over
/// every reachable window state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleAudit {
    /// Number of `(window, step-regime)` states visited.
    pub states_checked: u64,
    /// Horizon the audit covers; window-state sets repeat verbatim from
    /// step `k + 2` on, so the enumeration visits each distinct regime
    /// once.
    pub steps_covered: usize,
    /// Largest absolute conditional mean of an increment over all states
    /// (zero in exact arithmetic).
    pub max_abs_conditional_mean: f64,
    /// Attained supremum of `E[L^2 | state] = e(1-e)` and its argmax `e`.
    pub sup_second_moment: f64,
    pub argmax_second_e: f64,
    /// Attained supremum of `E[L^4 | state]` and its argmax `e`.
    pub sup_fourth_moment: f64,
    pub argmax_fourth_e: f64,
}

/// Enumerates every reachable window state at every step up to `n` and
/// reports the conditional-moment extremes of the martingale increments.
///
/// States at steps `1..=k+1` have growing window widths `0..=k`; from step
/// `k + 2` the width stays `k` and the state set is identical to the step
/// `k + 1` set, so each width is enumerated once. All `2^width` windows are
/// reachable because every one-step probability is strictly inside (0, 1).
pub fn exact_martingale_audit(
    params: &ModelParams,
    n: usize,
) -> Result<MartingaleAudit, OracleError> {
    let k = params.k();
    if n == 0 {
        return Err(OracleError::EmptyHorizon);
    }
    // same admission rule as the sweep, with the audit's own n ceiling
    let budget = Budget {
        max_k: 16,
        max_transitions: f64::INFINITY,
    };
    budget.check(k, n)?;
    if n > 10_000 {
        return Err(OracleError::BudgetExceeded {
            k,
            n,
            estimated_transitions: (k.min(60) as f64).exp2() * n as f64,
            max_transitions: 1e10,
            max_k: 16,
        });
    }
    let rule = StepRule::Canonical(*params);
    let mut audit = MartingaleAudit {
        states_checked: 0,
        steps_covered: n,
        max_abs_conditional_mean: 0.0,
        sup_second_moment: f64::MIN,
        argmax_second_e: f64::NAN,
        sup_fourth_moment: f64::MIN,
        argmax_fourth_e: f64::NAN,
    };
    let max_width = (n - 1).min(k);
    for width in 0..=max_width {
        for mask in 0u32..(1 << width) {
            let e = rule.prob(width, mask.count_ones());
            // E[L | state] = (1-e)(0-e) + e(1-e)
            let cond_mean = (1.0 - e) * (0.0 - e) + e * (1.0 - e);
            let second = increment_second_moment(e);
            let fourth = increment_fourth_moment(e);
            if cond_mean.abs() > audit.max_abs_conditional_mean {
                audit.max_abs_conditional_mean = cond_mean.abs();
            }
            if second > audit.sup_second_moment {
                audit.sup_second_moment = second;
                audit.argmax_second_e = e;
            }
            if fourth > audit.sup_fourth_moment {
                audit.sup_fourth_moment = fourth;
                audit.argmax_fourth_e = e;
            }
            audit.states_checked += 1;
        }
    }
    Ok(audit)
}
