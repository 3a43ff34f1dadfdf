//! Closed-form asymptotic quantities: the tabulated limit variance for all
//! three model presentations, the beta-function inverse behind it, limiting
//! covariances, center-of-mass limits, and an independently derived
//! stationary-chain long-run variance used as a cross-check.

use serde::Serialize;

use crate::error::{DomainError, ParamError};
use crate::model::{canonical_params, ModelKind, ModelParams};

/// Width of the routing window around theta = 1/2 inside which the
/// harmonic-sum branch is used; the general branch has a removable 0/0
/// there, and within this window the harmonic form evaluated at the actual
/// theta is accurate to ~1e-8 relative.
pub const THETA_HALF_SWITCH: f64 = 1e-6;

/// Relative disagreement beyond which the elephant presentation's tabulated
/// prefactor is flagged against the canonical-by-mapping value.
pub const ELEPHANT_DISCREPANCY_TOL: f64 = 1e-9;

/// Natural log of the gamma function, Lanczos approximation (g = 7, 9
/// coefficients) with the reflection formula below 1/2. Absolute error is
/// well under 1e-10 across [1e-3, 1e3].
pub fn log_gamma(x: f64) -> Result<f64, DomainError> {
    if !(x > 0.0) {
        return Err(DomainError::LogGamma(x));
    }
    Ok(log_gamma_unchecked(x))
}

fn log_gamma_unchecked(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;
    if x < 0.5 {
        // reflection: ln G(x) = ln(pi / sin(pi x)) - ln G(1 - x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - log_gamma_unchecked(1.0 - x);
    }
    let z = x - 1.0;
    let mut sum = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        sum += c / (z + (i + 1) as f64);
    }
    let base = z + 7.5;
    HALF_LOG_TWO_PI + (z + 0.5) * base.ln() - base + sum.ln()
}

/// Reciprocal beta function `1/B(k, a) = Gamma(k+a) / (Gamma(k) Gamma(a))`
/// for integer `k >= 1`, relative error well under 1e-9.
///
/// Callers must short-circuit `theta = 0` before reaching here: `a = 0` is
/// a domain error, not a limit.
pub fn inv_beta(k: usize, a: f64) -> Result<f64, DomainError> {
    if !(a > 0.0) {
        return Err(DomainError::InvBeta(a));
    }
    let kf = k as f64;
    Ok((log_gamma(kf + a)? - log_gamma(kf)? - log_gamma_unchecked(a)).exp())
}

/// Which formula produced a variance value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// theta = 0 short-circuit: `p(1-p)`.
    ThetaZero,
    /// Dedicated k = 1 formula `p(1-p)(1+theta)/(1-theta)`.
    K1,
    /// Harmonic-sum branch used at and near theta = 1/2.
    ThetaHalf,
    /// General branch with the beta-function inverse.
    General,
}

/// A tabulated limit variance together with the branch that produced it and
/// the inputs it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceResult {
    pub sigma2: f64,
    pub branch: Branch,
    pub p: f64,
    pub theta: f64,
    pub k: usize,
}

/// Bracket factor shared by the k >= 2 branches: the harmonic form at and
/// near theta = 1/2, the beta-function form elsewhere. Requires theta > 0.
fn bracket_factor(theta: f64, k: usize) -> (f64, Branch) {
    debug_assert!(theta > 0.0 && k >= 2);
    let kf = k as f64;
    if (theta - 0.5).abs() < THETA_HALF_SWITCH {
        let harmonic: f64 = (1..=k).map(|j| 1.0 / j as f64).sum();
        (1.0 - theta * theta / kf * harmonic, Branch::ThetaHalf)
    } else {
        let ib = inv_beta(k, 2.0 * theta).expect("theta > 0 routes away from a = 0");
        (
            1.0 - theta * theta / (kf * kf) * ((kf - ib) / (1.0 - 2.0 * theta)),
            Branch::General,
        )
    }
}

/// Tabulated limit variance for the canonical presentation.
///
/// Routing: theta = 0 short-circuits to `p(1-p)` (the beta inverse is
/// undefined at a = 0); k = 1 uses its dedicated formula; theta within
/// [`THETA_HALF_SWITCH`] of 1/2 uses the harmonic-sum branch; everything
/// else the general branch.
pub fn sigma2_ksum(params: &ModelParams) -> VarianceResult {
    let (p, theta, k) = (params.p(), params.theta(), params.k());
    let v = p * (1.0 - p);
    let (sigma2, branch) = if theta == 0.0 {
        (v, Branch::ThetaZero)
    } else if k == 1 {
        (v * (1.0 + theta) / (1.0 - theta), Branch::K1)
    } else {
        let (bracket, branch) = bracket_factor(theta, k);
        (v / ((1.0 - theta) * (1.0 - theta)) * bracket, branch)
    };
    VarianceResult {
        sigma2,
        branch,
        p,
        theta,
        k,
    }
}

/// The general (beta-inverse) branch evaluated without routing, for any
/// `k >= 1` and theta in (0, 1) away from 1/2. Exposed so the k = 1
/// reduction identity can be checked against [`sigma2_ksum`]'s dedicated
/// formula.
pub fn sigma2_ksum_general(p: f64, theta: f64, k: usize) -> Result<f64, DomainError> {
    let kf = k as f64;
    let ib = inv_beta(k, 2.0 * theta)?;
    let bracket = 1.0 - theta * theta / (kf * kf) * ((kf - ib) / (1.0 - 2.0 * theta));
    Ok(p * (1.0 - p) / ((1.0 - theta) * (1.0 - theta)) * bracket)
}

/// Tabulated limit variance for the minimal-walk presentation, evaluated
/// directly from its own closed form (`q(1-r)` prefactors), not through the
/// canonical mapping. Agreement with `sigma2_ksum(canonical_params(..))` to
/// 1e-12 relative is a tested identity, since
/// `p(1-p) = q(1-r)/(1-(r-q))^2` under the mapping.
pub fn sigma2_minimal(r: f64, q: f64, k: usize) -> Result<VarianceResult, ParamError> {
    let canonical = canonical_params(&ModelKind::Minimal { r, q, k })?;
    let theta = r - q;
    let one_minus = 1.0 - theta;
    let (sigma2, branch) = if theta == 0.0 {
        (q * (1.0 - r), Branch::ThetaZero)
    } else if k == 1 {
        (
            q * (1.0 - r) * (1.0 + theta) / (one_minus * one_minus * one_minus),
            Branch::K1,
        )
    } else {
        let (bracket, branch) = bracket_factor(theta, k);
        (
            q * (1.0 - r) / (one_minus * one_minus * one_minus * one_minus) * bracket,
            branch,
        )
    };
    Ok(VarianceResult {
        sigma2,
        branch,
        p: canonical.p(),
        theta,
        k,
    })
}

/// Elephant-presentation variance: the canonical-by-mapping value (which is
/// authoritative) alongside the independently tabulated prefactor form,
/// with a flag recording whether the two agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElephantVariance {
    pub alpha: f64,
    pub k: usize,
    /// Canonical value `4 * sigma2_ksum(1/2, 2 alpha - 1, k)`, from the
    /// variance relation between the +/-1 and 0/1 encodings.
    pub sigma2: f64,
    pub branch: Branch,
    /// The tabulated prefactor form: `alpha/(1-alpha)` at k = 1, otherwise
    /// `bracket / (4(1-alpha))`. Reported, never used as the canonical
    /// value.
    pub printed_sigma2: f64,
    /// True when `printed_sigma2` agrees with `sigma2` to
    /// [`ELEPHANT_DISCREPANCY_TOL`] relative.
    pub printed_matches: bool,
}

pub fn sigma2_elephant(alpha: f64, k: usize) -> Result<ElephantVariance, ParamError> {
    let canonical = canonical_params(&ModelKind::Elephant { alpha, k })?;
    let base = sigma2_ksum(&canonical);
    let sigma2 = 4.0 * base.sigma2;
    let theta = 2.0 * alpha - 1.0;
    let printed_sigma2 = if k == 1 {
        alpha / (1.0 - alpha)
    } else if theta == 0.0 {
        1.0 / (4.0 * (1.0 - alpha))
    } else {
        let (bracket, _) = bracket_factor(theta, k);
        bracket / (4.0 * (1.0 - alpha))
    };
    let printed_matches =
        (printed_sigma2 - sigma2).abs() <= ELEPHANT_DISCREPANCY_TOL * sigma2.abs();
    Ok(ElephantVariance {
        alpha,
        k,
        sigma2,
        branch: base.branch,
        printed_sigma2,
        printed_matches,
    })
}

/// Limit covariance of the rescaled success-rate process at times
/// `0 < s <= t`: `sigma2 / t`, independent of `s`.
pub fn limit_covariance(s: f64, t: f64, sigma2: f64) -> Result<f64, DomainError> {
    if !(s > 0.0 && s <= t) {
        return Err(DomainError::CovarianceTimes { s, t });
    }
    Ok(sigma2 / t)
}

/// Which limiting covariance structure a [`LimitSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceRule {
    /// `Cov(s, t) = sigma2 / t` for the rescaled success-rate process.
    SigmaOverT,
    /// Scalar limit variance `sigma2 / 3` for the rescaled center of mass.
    SigmaThird,
}

/// Limiting mean rate and variance for a rescaled statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSpec {
    pub sigma2: f64,
    pub mean_rate: f64,
    pub rule: CovarianceRule,
}

/// Center-of-mass limits: `C_n / n -> p/2` with limiting variance
/// `sigma2 / 3` for `sqrt(n) (C_n/n - p/2)`.
pub fn com_limits(params: &ModelParams) -> LimitSpec {
    LimitSpec {
        sigma2: sigma2_ksum(params).sigma2 / 3.0,
        mean_rate: params.p() / 2.0,
        rule: CovarianceRule::SigmaThird,
    }
}

/// Long-run variance of the stationary window chain, derived independently
/// of the tabulated formula.
///
/// In the stationary regime the centered outcome process satisfies
/// `X_t - p = (theta/k) * sum_{i=1..k} (X_{t-i} - p) + L_t` with
/// martingale-difference innovations `L_t`, i.e. it is an equal-weight
/// AR(k). Its long-run variance is therefore
/// `E[e(1-e)] / (1-theta)^2`, and `E[e(1-e)] = p(1-p) - (theta/k)^2 * V_k`
/// where `V_k` is the stationary variance of a window sum. `V_k` follows
/// from the stationary autocovariances `d_1..d_{k-1}`, which solve the
/// reflected Yule-Walker system
/// `d_m = (theta/k) * sum_{i=1..k} d_{|m-i|}` with `d_0 = p(1-p)`.
///
/// Exact cross-checks against the dynamic-programming oracle live in the
/// test suites; where this value and [`sigma2_ksum`] disagree (k >= 2 with
/// theta > 0), the oracle sides with this one.
pub fn sigma2_chain(params: &ModelParams) -> f64 {
    let (p, theta, k) = (params.p(), params.theta(), params.k());
    let v = p * (1.0 - p);
    if theta == 0.0 {
        return v;
    }
    let kf = k as f64;
    let windowed_variance = if k == 1 {
        v
    } else {
        let d = window_autocovariances(v, theta, k);
        let mut total = kf * v;
        for (m, dm) in d.iter().enumerate() {
            total += 2.0 * (kf - (m + 1) as f64) * dm;
        }
        total
    };
    let s2 = v - (theta / kf) * (theta / kf) * windowed_variance;
    s2 / ((1.0 - theta) * (1.0 - theta))
}

/// Stationary autocovariances `d_1..d_{k-1}` of the outcome process at lags
/// below the window length, from the reflected Yule-Walker system.
fn window_autocovariances(v: f64, theta: f64, k: usize) -> Vec<f64> {
    let n = k - 1;
    let w = theta / k as f64;
    // rows: equation for d_m, m = 1..k-1; columns: d_1..d_{k-1}
    let mut a = vec![0.0f64; n * n];
    let mut b = vec![0.0f64; n];
    for m in 1..=n {
        let row = &mut a[(m - 1) * n..m * n];
        row[m - 1] += 1.0;
        for i in 1..=k {
            let j = m.abs_diff(i);
            if j == 0 {
                b[m - 1] += w * v;
            } else {
                row[j - 1] -= w;
            }
        }
    }
    solve_dense(&mut a, &mut b, n);
    b
}

/// In-place Gaussian elimination with partial pivoting; solution lands in
/// `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        assert!(pivot.abs() > 0.0, "singular Yule-Walker system");
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor != 0.0 {
                for j in col..n {
                    a[row * n + j] -= factor * a[col * n + j];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[row * n + j] * b[j];
        }
        b[row] = acc / a[row * n + row];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(p: f64, theta: f64, k: usize) -> ModelParams {
        ModelParams::new(p, theta, k).unwrap()
    }

    // Independent product-form route for 1/B(k, a) with integer k:
    // a * prod_{j=1..k-1} (a + j)/j.
    fn inv_beta_product(k: usize, a: f64) -> f64 {
        let mut acc = a;
        for j in 1..k {
            acc *= (a + j as f64) / j as f64;
        }
        acc
    }

    #[test]
    fn log_gamma_reference_values() {
        // references from a 40-digit evaluation
        let cases = [
            (0.001, 6.907_178_885_383_853_7),
            (0.1, 2.252_712_651_734_206),
            (0.5, 0.572_364_942_924_700_1),
            (1.0, 0.0),
            (2.5, 0.284_682_870_472_919_16),
            (3.6, 1.312_923_308_576_416_1),
            (6.0, 4.787_491_742_782_046),
            (10.5, 13.940_625_219_403_764),
            (123.456, 469.605_547_129_929_47),
            (1000.0, 5_905.220_423_209_181),
        ];
        for (x, expected) in cases {
            let got = log_gamma(x).unwrap();
            assert!(
                (got - expected).abs() <= 1e-10 * expected.abs().max(1.0),
                "x={x}: got={got}, expected={expected}"
            );
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn inv_beta_examples() {
        assert_relative_eq!(inv_beta(2, 1.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(inv_beta(1, 0.8).unwrap(), 0.8, max_relative = 1e-12);
        assert_relative_eq!(inv_beta(3, 0.6).unwrap(), 1.248, max_relative = 1e-11);
        assert_relative_eq!(
            inv_beta(5, 0.37).unwrap(),
            0.737_175_228_987_5,
            max_relative = 1e-11
        );
        assert!(inv_beta(3, 0.0).is_err());
        assert!(inv_beta(3, -0.2).is_err());
    }

    #[test]
    fn inv_beta_matches_product_form() {
        for k in 1..=20usize {
            for a in [0.01, 0.2, 0.6, 0.999, 1.0, 1.37, 1.999] {
                let lg = inv_beta(k, a).unwrap();
                let prod = inv_beta_product(k, a);
                assert_relative_eq!(lg, prod, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn sigma2_theta_zero_short_circuits() {
        for (p, k) in [(0.5, 1usize), (0.3, 5), (0.9, 12)] {
            let r = sigma2_ksum(&params(p, 0.0, k));
            assert_eq!(r.sigma2, p * (1.0 - p));
            assert_eq!(r.branch, Branch::ThetaZero);
        }
    }

    #[test]
    fn sigma2_hand_evaluations() {
        let r = sigma2_ksum(&params(0.5, 0.5, 2));
        assert_relative_eq!(r.sigma2, 0.8125, max_relative = 1e-14);
        assert_eq!(r.branch, Branch::ThetaHalf);

        let r = sigma2_ksum(&params(0.5, 0.5, 1));
        assert_relative_eq!(r.sigma2, 0.75, max_relative = 1e-14);
        assert_eq!(r.branch, Branch::K1);

        // general branch, frozen from a 40-digit evaluation
        let r = sigma2_ksum(&params(0.3, 0.4, 3));
        assert_relative_eq!(r.sigma2, 0.532_311_111_111_111_1, max_relative = 1e-11);
        assert_eq!(r.branch, Branch::General);

        let r = sigma2_ksum(&params(0.5, 0.3, 2));
        assert_relative_eq!(r.sigma2, 0.480_357_142_857_142_86, max_relative = 1e-11);
        let r = sigma2_ksum(&params(0.3, 0.5, 3));
        assert_relative_eq!(r.sigma2, 0.711_666_666_666_666_7, max_relative = 1e-11);
        let r = sigma2_ksum(&params(0.7, 0.6, 4));
        assert_relative_eq!(r.sigma2, 1.029_945, max_relative = 1e-11);
    }

    #[test]
    fn general_branch_reduces_to_k1_formula() {
        for i in 0..10 {
            for j in 0..10 {
                let p = 0.05 + 0.1 * i as f64;
                let theta = 0.04 + 0.1 * j as f64; // avoids 1/2 by construction
                let general = sigma2_ksum_general(p, theta, 1).unwrap();
                let dedicated = p * (1.0 - p) * (1.0 + theta) / (1.0 - theta);
                assert_relative_eq!(general, dedicated, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn branch_switch_is_continuous_at_theta_half() {
        for k in 2..=10usize {
            let at_half = sigma2_ksum(&params(0.4, 0.5, k)).sigma2;
            for d in [1e-7, -1e-7] {
                let r = sigma2_ksum(&params(0.4, 0.5 + d, k));
                assert_eq!(r.branch, Branch::ThetaHalf);
                assert!(
                    (r.sigma2 - at_half).abs() <= 1e-5 * at_half,
                    "k={k} d={d}"
                );
            }
            // just outside the switch the general branch must agree too
            for d in [2e-6, -2e-6] {
                let r = sigma2_ksum(&params(0.4, 0.5 + d, k));
                assert_eq!(r.branch, Branch::General);
                assert!(
                    (r.sigma2 - at_half).abs() <= 1e-4 * at_half,
                    "k={k} d={d}"
                );
            }
        }
    }

    #[test]
    fn tiny_theta_approaches_iid_variance() {
        for k in [2usize, 4, 9] {
            let r = sigma2_ksum(&params(0.35, 1e-10, k));
            assert_relative_eq!(r.sigma2, 0.35 * 0.65, max_relative = 1e-8);
        }
    }

    #[test]
    fn sigma2_nondecreasing_in_theta() {
        for k in [1usize, 2, 3, 7] {
            for p in [0.2, 0.5, 0.8] {
                let mut prev = 0.0;
                for i in 0..=90 {
                    let theta = i as f64 / 100.0;
                    let s = sigma2_ksum(&params(p, theta, k)).sigma2;
                    assert!(s >= prev - 1e-12, "p={p} k={k} theta={theta}");
                    prev = s;
                }
            }
        }
    }

    #[test]
    fn minimal_hand_evaluation_and_identity() {
        let r = sigma2_minimal(0.6, 0.3, 1).unwrap();
        assert_relative_eq!(r.sigma2, 0.454_810_495_626_822_16, max_relative = 1e-12);
        assert_eq!(r.branch, Branch::K1);

        let r = sigma2_minimal(0.6, 0.3, 2).unwrap();
        assert_relative_eq!(r.sigma2, 0.470_553_935_860_058_3, max_relative = 1e-12);

        // theta = 0 reduces to q(1-q)
        let r = sigma2_minimal(0.3, 0.3, 4).unwrap();
        assert_eq!(r.sigma2, 0.3 * 0.7);
        assert_eq!(r.branch, Branch::ThetaZero);
    }

    #[test]
    fn minimal_equals_canonical_on_grid() {
        for r in [0.2, 0.45, 0.6, 0.85] {
            for q in [0.1, 0.2, 0.44] {
                if r < q {
                    continue;
                }
                for k in 1..=6usize {
                    let direct = sigma2_minimal(r, q, k).unwrap().sigma2;
                    let canon = canonical_params(&ModelKind::Minimal { r, q, k }).unwrap();
                    let mapped = sigma2_ksum(&canon).sigma2;
                    assert!(
                        (direct - mapped).abs() <= 1e-12 * mapped,
                        "r={r} q={q} k={k}: {direct} vs {mapped}"
                    );
                }
            }
        }
    }

    #[test]
    fn elephant_canonical_and_printed() {
        // alpha = 1/2 is the unit-variance i.i.d. +/-1 walk
        let e = sigma2_elephant(0.5, 3).unwrap();
        assert_eq!(e.sigma2, 1.0);
        assert!(!e.printed_matches); // printed form gives 1/(4(1-alpha)) = 1/2

        // k = 1: both routes give alpha/(1-alpha) = 3
        let e = sigma2_elephant(0.75, 1).unwrap();
        assert_relative_eq!(e.sigma2, 3.0, max_relative = 1e-12);
        assert_relative_eq!(e.printed_sigma2, 3.0, max_relative = 1e-12);
        assert!(e.printed_matches);

        // k = 2: canonical 4 * 0.8125 = 3.25, printed 0.8125, flagged
        let e = sigma2_elephant(0.75, 2).unwrap();
        assert_relative_eq!(e.sigma2, 3.25, max_relative = 1e-14);
        assert_relative_eq!(e.printed_sigma2, 0.8125, max_relative = 1e-14);
        assert!(!e.printed_matches);

        assert!(sigma2_elephant(0.4, 2).is_err());
        assert!(sigma2_elephant(1.0, 2).is_err());
    }

    #[test]
    fn limit_covariance_examples() {
        assert_eq!(limit_covariance(1.0, 1.0, 0.8125).unwrap(), 0.8125);
        assert_eq!(limit_covariance(0.5, 1.0, 0.8125).unwrap(), 0.8125);
        assert_eq!(limit_covariance(0.2, 0.5, 1.0).unwrap(), 2.0);
        assert!(limit_covariance(0.0, 1.0, 1.0).is_err());
        assert!(limit_covariance(0.7, 0.5, 1.0).is_err());
    }

    #[test]
    fn com_limits_examples() {
        let l = com_limits(&params(0.5, 0.0, 3));
        assert_eq!(l.mean_rate, 0.25);
        assert_relative_eq!(l.sigma2, 0.25 / 3.0, max_relative = 1e-14);

        let l = com_limits(&params(0.5, 0.5, 2));
        assert_eq!(l.mean_rate, 0.25);
        assert_relative_eq!(l.sigma2, 0.270_833_333_333_333_3, max_relative = 1e-12);
        assert_eq!(l.rule, CovarianceRule::SigmaThird);
    }

    #[test]
    fn chain_variance_reference_values() {
        // frozen from an exact-rational solve of the Yule-Walker system
        let cases = [
            (0.5, 0.3, 2, 115.0 / 238.0),
            (0.3, 0.5, 3, 147.0 / 200.0),
            (0.7, 0.6, 4, 483.0 / 440.0),
            (0.5, 0.5, 2, 5.0 / 6.0),
            (0.5, 0.5, 1, 0.75),
            (0.3, 0.4, 3, 119.0 / 220.0),
        ];
        for (p, theta, k, expected) in cases {
            let got = sigma2_chain(&params(p, theta, k));
            assert_relative_eq!(got, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn chain_variance_matches_k1_formula() {
        for theta in [0.0, 0.1, 0.5, 0.77] {
            for p in [0.2, 0.5, 0.9] {
                let chain = sigma2_chain(&params(p, theta, 1));
                let formula = sigma2_ksum(&params(p, theta, 1)).sigma2;
                assert_relative_eq!(chain, formula, max_relative = 1e-13);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_minimal_identity(
            r in 0.05f64..0.95,
            drift in 0.0f64..0.9,
            k in 1usize..8,
        ) {
            let q = r - drift;
            prop_assume!(q > 0.05);
            let direct = sigma2_minimal(r, q, k).unwrap().sigma2;
            let canon = canonical_params(&ModelKind::Minimal { r, q, k }).unwrap();
            let mapped = sigma2_ksum(&canon).sigma2;
            prop_assert!((direct - mapped).abs() <= 1e-12 * mapped.abs());
        }

        #[test]
        fn prop_chain_variance_positive_and_at_most_formulaless_bound(
            p in 0.05f64..0.95,
            theta in 0.0f64..0.95,
            k in 1usize..12,
        ) {
            let pr = params(p, theta, k);
            let chain = sigma2_chain(&pr);
            let v = p * (1.0 - p);
            // s2 = (1-theta)^2 sigma2 must stay within (0, 1/4]
            let s2 = chain * (1.0 - theta) * (1.0 - theta);
            prop_assert!(s2 > 0.0 && s2 <= v + 1e-12);
        }
    }
}
