//! Small numeric helpers shared across modules.

/// Type-7 (linear interpolation of order statistics) quantile of a sorted
/// slice. `p` must be in [0, 1] and `sorted` non-empty.
pub(crate) fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let j = h.floor() as usize;
    if j + 1 >= n {
        return sorted[n - 1];
    }
    let g = h - j as f64;
    sorted[j] + g * (sorted[j + 1] - sorted[j])
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}
