//! Value, slope, and normalized area-under-the-curve transformations of a
//! latent trajectory.
//!
//! A latent trajectory m(t) = x(t)'beta + z(t)'b is linear in its
//! coefficients, so each transformation reduces to applying the same
//! transformation to the design columns. The functions here produce those
//! transformed design rows (F_x, F_z); downstream code never needs the
//! coefficient values, which keeps every sampler conditional linear-Gaussian.

use crate::error::{Error, Result};
use crate::model::{FunctionalKind, Normalization, OutcomeSpec};
use crate::spline::NaturalSpline;

/// Below this time the 1/t normalization is replaced by its analytic limit,
/// the instantaneous value.
pub const SMALL_TIME: f64 = 1e-8;

/// A single functional-form evaluation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalQuery {
    pub kind: FunctionalKind,
    pub t: f64,
    pub window_d: Option<f64>,
    pub normalize_by: Normalization,
}

impl FunctionalQuery {
    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(Error::data(format!(
                "functional forms are defined for t >= 0, got {}",
                self.t
            )));
        }
        if let Some(d) = self.window_d {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::data(format!("window must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Integration bounds for the cumulative functional at time `t`: the lower
/// limit is clamped at 0 so a window never reaches before the time origin.
pub fn auc_window(t: f64, window_d: Option<f64>) -> (f64, f64) {
    let lo = match window_d {
        Some(d) => (t - d).max(0.0),
        None => 0.0,
    };
    (lo, t)
}

/// Normalizing constant for the cumulative functional.
pub fn auc_normalizer(t: f64, lo: f64, normalize_by: Normalization) -> f64 {
    match normalize_by {
        Normalization::OneOverT => t,
        Normalization::OneOverWindow => t - lo,
    }
}

/// Transformed design rows (fixed, random) for the source outcome's layout.
/// Covariate columns are treated as constant in time: they pass through the
/// value form, differentiate to zero, and integrate to value times window
/// length. Design assembly substitutes observed step histories where those
/// exist; see `build_design`.
pub fn functional_rows(
    query: &FunctionalQuery,
    outcome: &OutcomeSpec,
    basis: Option<&NaturalSpline>,
    covariate_row: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    functional_rows_with_covariate_integrals(query, outcome, basis, covariate_row, None)
}

/// As [`functional_rows`], but for the AUC kind the caller may supply exact
/// integrals of each covariate over the integration window (used for
/// time-varying covariates recorded as step functions).
pub(crate) fn functional_rows_with_covariate_integrals(
    query: &FunctionalQuery,
    outcome: &OutcomeSpec,
    basis: Option<&NaturalSpline>,
    covariate_row: &[f64],
    covariate_integrals: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    query.validate()?;
    if covariate_row.len() != outcome.covariates.len() {
        return Err(Error::dimension(format!(
            "outcome '{}' expects {} covariates, got {}",
            outcome.name,
            outcome.covariates.len(),
            covariate_row.len()
        )));
    }
    match (outcome.spline_df, basis) {
        (0, None) => {}
        (df, Some(b)) if b.df() == df => {}
        _ => {
            return Err(Error::dimension(format!(
                "spline basis does not match outcome '{}' (df = {})",
                outcome.name, outcome.spline_df
            )));
        }
    }

    let t = query.t;
    match query.kind {
        FunctionalKind::Value => value_rows(outcome, basis, t, covariate_row),
        FunctionalKind::Slope => {
            let spline_part = match basis {
                Some(b) => b.deriv(t)?,
                None => Vec::new(),
            };
            // Time-fixed columns differentiate to zero.
            Ok(assemble(
                outcome,
                0.0,
                &spline_part,
                &vec![0.0; covariate_row.len()],
            ))
        }
        FunctionalKind::Auc => {
            if t <= SMALL_TIME {
                // Analytic limit of the normalized integral as t -> 0.
                return value_rows(outcome, basis, t, covariate_row);
            }
            let (lo, hi) = auc_window(t, query.window_d);
            let norm = auc_normalizer(t, lo, query.normalize_by);
            let length = hi - lo;
            let spline_part: Vec<f64> = match basis {
                Some(b) => b.integral(lo, hi)?.iter().map(|v| v / norm).collect(),
                None => Vec::new(),
            };
            let cov_part: Vec<f64> = match covariate_integrals {
                Some(ints) => {
                    if ints.len() != covariate_row.len() {
                        return Err(Error::dimension(
                            "covariate integral count mismatch".to_string(),
                        ));
                    }
                    ints.iter().map(|v| v / norm).collect()
                }
                None => covariate_row.iter().map(|w| w * length / norm).collect(),
            };
            Ok(assemble(outcome, length / norm, &spline_part, &cov_part))
        }
    }
}

fn value_rows(
    outcome: &OutcomeSpec,
    basis: Option<&NaturalSpline>,
    t: f64,
    covariate_row: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spline_part = match basis {
        Some(b) => b.eval(t)?,
        None => Vec::new(),
    };
    Ok(assemble(outcome, 1.0, &spline_part, covariate_row))
}

/// Stitch the transformed intercept, spline, and covariate pieces into the
/// fixed row and the matching random-effect row.
fn assemble(
    outcome: &OutcomeSpec,
    intercept: f64,
    spline_part: &[f64],
    cov_part: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut fx = Vec::with_capacity(outcome.n_fixed());
    fx.push(intercept);
    fx.extend_from_slice(spline_part);
    fx.extend_from_slice(cov_part);

    let mut fz = Vec::with_capacity(outcome.n_random());
    if outcome.random_intercept {
        fz.push(intercept);
    }
    if outcome.random_spline {
        fz.extend_from_slice(spline_part);
    }
    (fx, fz)
}
