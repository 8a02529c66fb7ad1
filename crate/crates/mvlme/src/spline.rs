//! Natural cubic spline bases with exact derivatives and definite integrals.
//!
//! The basis spans the natural cubic splines on a knot sequence, excluding the
//! constant function (models carry an explicit intercept column instead). A
//! basis with `df` columns uses `df + 1` knots: two boundary knots and
//! `df - 1` interior knots. Column 0 is the identity `t`; the remaining
//! columns are differences of truncated cubic terms constrained to be linear
//! outside the boundary knots.
//!
//! Each column is stored as its truncated-power expansion together with the
//! boundary values and slopes, so evaluation extrapolates with the exact
//! linear extension and definite integrals come from piecewise polynomial
//! antiderivatives rather than quadrature.

use crate::error::{Error, Result};
use crate::util::quantile_type7;

/// Knot configuration for a natural cubic spline basis without intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSet {
    boundary_lo: f64,
    boundary_hi: f64,
    interior: Vec<f64>,
    df: usize,
}

impl KnotSet {
    /// Build a knot set, checking ordering and the `df`/interior-count
    /// relation (`interior.len() == df - 1`).
    pub fn new(boundary_lo: f64, boundary_hi: f64, interior: Vec<f64>, df: usize) -> Result<Self> {
        if df < 1 {
            return Err(Error::spline("df must be at least 1"));
        }
        if !boundary_lo.is_finite() || !boundary_hi.is_finite() {
            return Err(Error::spline("boundary knots must be finite"));
        }
        if boundary_lo >= boundary_hi {
            return Err(Error::spline(format!(
                "boundary_lo ({boundary_lo}) must be below boundary_hi ({boundary_hi})"
            )));
        }
        if interior.len() != df - 1 {
            return Err(Error::spline(format!(
                "natural spline with df = {df} needs {} interior knots, got {}",
                df - 1,
                interior.len()
            )));
        }
        let mut prev = boundary_lo;
        for &k in &interior {
            if !k.is_finite() {
                return Err(Error::spline("interior knots must be finite"));
            }
            if k <= prev {
                return Err(Error::spline(
                    "interior knots must be strictly increasing and strictly inside the boundary",
                ));
            }
            prev = k;
        }
        if prev >= boundary_hi {
            return Err(Error::spline(
                "interior knots must lie strictly below the upper boundary knot",
            ));
        }
        Ok(KnotSet {
            boundary_lo,
            boundary_hi,
            interior,
            df,
        })
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.boundary_lo, self.boundary_hi)
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// All knots in increasing order: boundary_lo, interior…, boundary_hi.
    pub fn all_knots(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.df + 1);
        all.push(self.boundary_lo);
        all.extend_from_slice(&self.interior);
        all.push(self.boundary_hi);
        all
    }
}

/// Place knots from observed times: boundary at min/max (unless overridden),
/// interior at equally spaced type-7 quantiles of the observed times.
pub fn make_knots(times: &[f64], df: usize, boundary: Option<(f64, f64)>) -> Result<KnotSet> {
    if times.is_empty() {
        return Err(Error::spline("cannot place knots on an empty time set"));
    }
    if df < 1 {
        return Err(Error::spline("df must be at least 1"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::spline("times must be finite"));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1usize;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    // df + 1 knots in total; each needs its own distinct observed time.
    if distinct < df + 1 {
        return Err(Error::spline(format!(
            "insufficient distinct times: natural spline with df = {df} needs at least {} \
             distinct values, got {distinct}",
            df + 1
        )));
    }
    let (lo, hi) = match boundary {
        Some((lo, hi)) => {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::spline("boundary override must satisfy lo < hi"));
            }
            (lo, hi)
        }
        None => (sorted[0], sorted[sorted.len() - 1]),
    };
    let interior: Vec<f64> = (1..df)
        .map(|j| quantile_type7(&sorted, j as f64 / df as f64))
        .collect();
    KnotSet::new(lo, hi, interior, df)
}

/// One basis column: a linear part plus truncated cubic terms
/// `slope * t + sum_j w_j * (t - knot_j)_+^3`, valid inside the boundary.
#[derive(Debug, Clone)]
struct ColumnTerms {
    slope: f64,
    cubics: Vec<(f64, f64)>, // (knot, weight)
}

impl ColumnTerms {
    fn value(&self, t: f64) -> f64 {
        let mut v = self.slope * t;
        for &(knot, w) in &self.cubics {
            let u = t - knot;
            if u > 0.0 {
                v += w * u * u * u;
            }
        }
        v
    }

    fn deriv(&self, t: f64) -> f64 {
        let mut v = self.slope;
        for &(knot, w) in &self.cubics {
            let u = t - knot;
            if u > 0.0 {
                v += 3.0 * w * u * u;
            }
        }
        v
    }

    /// Antiderivative, valid for t inside the boundary interval.
    fn antiderivative(&self, t: f64) -> f64 {
        let mut v = 0.5 * self.slope * t * t;
        for &(knot, w) in &self.cubics {
            let u = t - knot;
            if u > 0.0 {
                v += 0.25 * w * u * u * u * u;
            }
        }
        v
    }
}

/// Evaluator for a natural cubic spline basis built from a [`KnotSet`].
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: KnotSet,
    columns: Vec<ColumnTerms>,
    lo_values: Vec<f64>,
    lo_slopes: Vec<f64>,
    hi_values: Vec<f64>,
    hi_slopes: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(knots: KnotSet) -> Self {
        let all = knots.all_knots();
        let m = all.len(); // df + 1
        let hi = all[m - 1];
        let mut columns = Vec::with_capacity(knots.df());
        columns.push(ColumnTerms {
            slope: 1.0,
            cubics: Vec::new(),
        });
        // Differences of scaled truncated cubics; the shared upper-knot term
        // cancels the quadratic growth so every column is linear beyond hi.
        let last_inner = all[m - 2];
        let w_last = 1.0 / (hi - last_inner);
        for c in 1..knots.df() {
            let knot = all[c - 1];
            let w = 1.0 / (hi - knot);
            columns.push(ColumnTerms {
                slope: 0.0,
                cubics: vec![(knot, w), (last_inner, -w_last), (hi, w_last - w)],
            });
        }

        let (lo, hi) = knots.boundary();
        let lo_values: Vec<f64> = columns.iter().map(|c| c.value(lo)).collect();
        let lo_slopes: Vec<f64> = columns.iter().map(|c| c.deriv(lo)).collect();
        let hi_values: Vec<f64> = columns.iter().map(|c| c.value(hi)).collect();
        let hi_slopes: Vec<f64> = columns.iter().map(|c| c.deriv(hi)).collect();
        NaturalSpline {
            knots,
            columns,
            lo_values,
            lo_slopes,
            hi_values,
            hi_slopes,
        }
    }

    pub fn df(&self) -> usize {
        self.knots.df()
    }

    pub fn knots(&self) -> &KnotSet {
        &self.knots
    }

    /// Basis values at `t`. Linear extrapolation beyond the boundary knots.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.df()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::spline("evaluation point must be finite"));
        }
        debug_assert_eq!(out.len(), self.df());
        let (lo, hi) = self.knots.boundary();
        if t < lo {
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.lo_values[j] + self.lo_slopes[j] * (t - lo);
            }
        } else if t > hi {
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.hi_values[j] + self.hi_slopes[j] * (t - hi);
            }
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.columns[j].value(t);
            }
        }
        Ok(())
    }

    /// Exact first derivative of each basis column at `t`.
    pub fn deriv(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.df()];
        self.deriv_into(t, &mut out)?;
        Ok(out)
    }

    pub fn deriv_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::spline("evaluation point must be finite"));
        }
        debug_assert_eq!(out.len(), self.df());
        let (lo, hi) = self.knots.boundary();
        if t < lo {
            out.copy_from_slice(&self.lo_slopes);
        } else if t > hi {
            out.copy_from_slice(&self.hi_slopes);
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.columns[j].deriv(t);
            }
        }
        Ok(())
    }

    /// Exact definite integral of each basis column over [a, b], computed
    /// from piecewise polynomial antiderivatives (no quadrature).
    pub fn integral(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.df()];
        self.integral_into(a, b, &mut out)?;
        Ok(out)
    }

    pub fn integral_into(&self, a: f64, b: f64, out: &mut [f64]) -> Result<()> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::spline("integration bounds must be finite"));
        }
        if a > b {
            return Err(Error::spline(format!(
                "integration bounds out of order: a = {a} > b = {b}"
            )));
        }
        debug_assert_eq!(out.len(), self.df());
        let (lo, hi) = self.knots.boundary();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            // Left linear extension on [a, min(b, lo)].
            if a < lo {
                let t1 = b.min(lo);
                acc += Self::linear_segment_integral(self.lo_values[j], self.lo_slopes[j], lo, a, t1);
            }
            // Cubic interior on [max(a, lo), min(b, hi)].
            let c0 = a.max(lo);
            let c1 = b.min(hi);
            if c1 > c0 {
                acc += self.columns[j].antiderivative(c1) - self.columns[j].antiderivative(c0);
            }
            // Right linear extension on [max(a, hi), b].
            if b > hi {
                let t0 = a.max(hi);
                acc += Self::linear_segment_integral(self.hi_values[j], self.hi_slopes[j], hi, t0, b);
            }
            *o = acc;
        }
        Ok(())
    }

    /// Integral of `v0 + s * (t - origin)` over [t0, t1].
    fn linear_segment_integral(v0: f64, s: f64, origin: f64, t0: f64, t1: f64) -> f64 {
        let u0 = t0 - origin;
        let u1 = t1 - origin;
        v0 * (u1 - u0) + 0.5 * s * (u1 * u1 - u0 * u0)
    }
}

/// Basis values at `t` for a knot set (builds the evaluator on the fly; for
/// repeated evaluation construct a [`NaturalSpline`] once).
pub fn ns_eval(t: f64, knots: &KnotSet) -> Result<Vec<f64>> {
    NaturalSpline::new(knots.clone()).eval(t)
}

pub fn ns_deriv(t: f64, knots: &KnotSet) -> Result<Vec<f64>> {
    NaturalSpline::new(knots.clone()).deriv(t)
}

pub fn ns_integral(a: f64, b: f64, knots: &KnotSet) -> Result<Vec<f64>> {
    NaturalSpline::new(knots.clone()).integral(a, b)
}
