//! Shared test oracles, independent of the library's implementation paths:
//! a truncated-power natural spline, trapezoid quadrature, and dense
//! generalized-least-squares conditional moments assembled from raw data.

#![allow(dead_code)]

pub mod oracle;

use nalgebra::{DMatrix, DVector};

/// Truncated cubic (t - knot)_+^3.
fn tp3(t: f64, knot: f64) -> f64 {
    let u = t - knot;
    if u > 0.0 {
        u * u * u
    } else {
        0.0
    }
}

/// Natural cubic spline basis (no intercept) from the truncated-power
/// construction with the natural constraints: column 0 is t, column k is
/// d_k(t) - d_{M-2}(t) with d_k(t) = ((t-k_k)+^3 - (t-k_M)+^3)/(k_M - k_k).
pub fn tp_basis(t: f64, lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior.len() + 2);
    knots.push(lo);
    knots.extend_from_slice(interior);
    knots.push(hi);
    let m = knots.len();
    let last = knots[m - 1];
    let d = |k: usize| (tp3(t, knots[k]) - tp3(t, last)) / (last - knots[k]);
    let mut out = vec![t];
    for k in 0..m - 2 {
        out.push(d(k) - d(m - 2));
    }
    out
}

/// Composite trapezoid rule with n intervals.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + h * i as f64);
    }
    acc * h
}

/// Type-7 sample quantile on a sorted slice (independent reimplementation).
pub fn quantile7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let j = h.floor() as usize;
    if j + 1 >= n {
        return sorted[n - 1];
    }
    sorted[j] + (h - j as f64) * (sorted[j + 1] - sorted[j])
}

/// Interior knots at equally spaced quantiles, mirroring the documented
/// placement rule.
pub fn quantile_knots(times: &[f64], df: usize) -> (f64, f64, Vec<f64>) {
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let interior: Vec<f64> = (1..df)
        .map(|j| quantile7(&sorted, j as f64 / df as f64))
        .collect();
    (sorted[0], sorted[sorted.len() - 1], interior)
}

/// Mean and covariance of N(P^-1 h, P^-1) computed densely.
pub fn dense_gaussian_moments(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let cov = precision
        .clone()
        .try_inverse()
        .expect("oracle precision invertible");
    (&cov * linear, cov)
}

/// Column means of draws.
pub fn draw_means(draws: &[DVector<f64>]) -> DVector<f64> {
    let n = draws.len() as f64;
    let mut acc = DVector::zeros(draws[0].len());
    for d in draws {
        acc += d;
    }
    acc / n
}

/// Column variances of draws (population denominator).
pub fn draw_variances(draws: &[DVector<f64>]) -> DVector<f64> {
    let n = draws.len() as f64;
    let means = draw_means(draws);
    let mut acc = DVector::zeros(draws[0].len());
    for d in draws {
        let c = d - &means;
        acc += c.component_mul(&c);
    }
    acc / n
}

/// Assert an empirical mean vector agrees with an oracle mean within
/// `sigmas` Monte-Carlo standard errors computed from the oracle covariance.
pub fn assert_means_close(
    label: &str,
    empirical: &DVector<f64>,
    oracle_mean: &DVector<f64>,
    oracle_cov: &DMatrix<f64>,
    n_draws: usize,
    sigmas: f64,
) {
    for j in 0..oracle_mean.len() {
        let se = (oracle_cov[(j, j)] / n_draws as f64).sqrt().max(1e-300);
        let delta = (empirical[j] - oracle_mean[j]).abs();
        assert!(
            delta <= sigmas * se,
            "{label}: coordinate {j} off by {delta:.3e} (> {sigmas} x SE {se:.3e})"
        );
    }
}

/// Assert empirical variances agree with oracle variances; the SE of a
/// sample variance of a Gaussian is var * sqrt(2/n).
pub fn assert_variances_close(
    label: &str,
    empirical: &DVector<f64>,
    oracle_cov: &DMatrix<f64>,
    n_draws: usize,
    sigmas: f64,
) {
    for j in 0..empirical.len() {
        let v = oracle_cov[(j, j)];
        let se = v * (2.0 / n_draws as f64).sqrt();
        let delta = (empirical[j] - v).abs();
        assert!(
            delta <= sigmas * se.max(1e-300),
            "{label}: variance {j} off by {delta:.3e} (oracle {v:.3e})"
        );
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}
