//! Functional-form rows against trapezoid quadrature on random trajectories.

mod common;

use common::{tp_basis, trapezoid};
use mvlme::model::{FunctionalKind, Normalization, OutcomeSpec};
use mvlme::spline::{KnotSet, NaturalSpline};
use mvlme::{functional_rows, FunctionalQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn source_spec(spline_df: usize) -> OutcomeSpec {
    OutcomeSpec {
        name: "src".into(),
        covariates: vec!["w".into()],
        spline_df,
        random_intercept: true,
        random_spline: true,
    }
}

/// m(s) for fixed coefficients over the truncated-power oracle basis.
fn latent(
    s: f64,
    lo: f64,
    hi: f64,
    interior: &[f64],
    beta: &[f64], // intercept, spline..., covariate
    w: f64,
) -> f64 {
    let basis = tp_basis(s, lo, hi, interior);
    let mut m = beta[0];
    for (j, b) in basis.iter().enumerate() {
        m += beta[1 + j] * b;
    }
    m + beta[1 + basis.len()] * w
}

#[test]
fn auc_rows_match_trapezoid_for_random_coefficients() {
    let mut rng = ChaCha20Rng::seed_from_u64(59);
    let knots = KnotSet::new(0.0, 8.0, vec![3.5], 2).unwrap();
    let basis = NaturalSpline::new(knots.clone());
    let spec = source_spec(2);
    let (lo, hi) = knots.boundary();
    let t = 5.9;
    for _ in 0..40 {
        let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = rng.random_range(-1.0..1.0);
        let query = FunctionalQuery {
            kind: FunctionalKind::Auc,
            t,
            window_d: None,
            normalize_by: Normalization::OneOverT,
        };
        let (fx, _) = functional_rows(&query, &spec, Some(&basis), &[w]).unwrap();
        // Assemble the functional value two ways: through the rows and by
        // quadrature of the latent trajectory itself. fx's covariate entry is
        // w * (t - 0) / t = w, so it carries the covariate contribution.
        let through_rows = fx[0] * beta[0] + fx[1] * beta[1] + fx[2] * beta[2] + fx[3] * beta[3];
        let quad = trapezoid(
            |s| latent(s, lo, hi, knots.interior(), &beta, w),
            0.0,
            t,
            200_000,
        ) / t;
        let rel = (through_rows - quad).abs() / quad.abs().max(1e-9);
        assert!(
            rel < 1e-6,
            "rows {through_rows} vs quadrature {quad} (rel {rel:.2e})"
        );
    }
}

#[test]
fn windowed_auc_matches_trapezoid_with_clamped_lower_limit() {
    let mut rng = ChaCha20Rng::seed_from_u64(60);
    let knots = KnotSet::new(6.0, 20.0, vec![12.0], 2).unwrap();
    let basis = NaturalSpline::new(knots.clone());
    let spec = source_spec(2);
    let (lo_k, hi_k) = knots.boundary();
    for &(t, d) in &[(10.0, 2.0), (15.0, 5.0), (8.0, 10.0), (4.0, 10.0)] {
        let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = rng.random_range(-1.0..1.0);
        let query = FunctionalQuery {
            kind: FunctionalKind::Auc,
            t,
            window_d: Some(d),
            normalize_by: Normalization::OneOverT,
        };
        let (fx, _) = functional_rows(&query, &spec, Some(&basis), &[w]).unwrap();
        let through_rows: f64 = fx
            .iter()
            .zip(beta.iter())
            .map(|(f, b)| f * b)
            .sum();
        let lower = (t - d).max(0.0);
        // The displayed-model normalizer stays 1/t even for windows.
        let quad = trapezoid(
            |s| latent(s, lo_k, hi_k, knots.interior(), &beta, w),
            lower,
            t,
            200_000,
        ) / t;
        let rel = (through_rows - quad).abs() / quad.abs().max(1e-9);
        assert!(rel < 1e-6, "t = {t}, d = {d}: {through_rows} vs {quad}");
    }
}

#[test]
fn one_over_window_normalization_uses_effective_length() {
    let knots = KnotSet::new(0.0, 10.0, vec![5.0], 2).unwrap();
    let basis = NaturalSpline::new(knots.clone());
    let spec = OutcomeSpec {
        name: "src".into(),
        covariates: vec![],
        spline_df: 2,
        random_intercept: true,
        random_spline: true,
    };
    let t = 8.0;
    let d = 3.0;
    let q_t = FunctionalQuery {
        kind: FunctionalKind::Auc,
        t,
        window_d: Some(d),
        normalize_by: Normalization::OneOverT,
    };
    let q_w = FunctionalQuery {
        kind: FunctionalKind::Auc,
        t,
        window_d: Some(d),
        normalize_by: Normalization::OneOverWindow,
    };
    let (fx_t, _) = functional_rows(&q_t, &spec, Some(&basis), &[]).unwrap();
    let (fx_w, _) = functional_rows(&q_w, &spec, Some(&basis), &[]).unwrap();
    for j in 0..fx_t.len() {
        assert!((fx_w[j] - fx_t[j] * (t / d)).abs() < 1e-12);
    }
    // Intercept column under 1/window is exactly 1 (length / length).
    assert_eq!(fx_w[0], 1.0);
}
