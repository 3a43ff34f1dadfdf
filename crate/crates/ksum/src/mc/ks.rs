//! Kolmogorov-Smirnov distance between an empirical sample and a reference
//! distribution function.

use std::sync::LazyLock;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::McError;

static STANDARD_NORMAL: LazyLock<Normal> =
    LazyLock::new(|| Normal::new(0.0, 1.0).expect("unit normal"));

/// Standard normal distribution function.
pub fn standard_normal_cdf(x: f64) -> f64 {
    STANDARD_NORMAL.cdf(x)
}

/// Exact two-sided sup-norm distance between the empirical CDF of a sorted
/// sample and `cdf`:
/// `max_i max(F(x_i) - i/N, (i+1)/N - F(x_i))`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> Result<f64, McError> {
    if sorted.is_empty() {
        return Err(McError::EmptySample);
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "sample must be sorted");
    let n = sorted.len() as f64;
    let mut dist = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let below = f - i as f64 / n;
        let above = (i + 1) as f64 / n - f;
        dist = dist.max(below).max(above);
    }
    Ok(dist)
}
