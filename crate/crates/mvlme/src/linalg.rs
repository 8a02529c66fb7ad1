//! Dense sampling primitives used by the Gibbs blocks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Diagonal jitter applied once when a conditional precision fails to factor.
pub const CHOLESKY_JITTER: f64 = 1e-10;

pub(crate) struct CholeskyOutcome {
    pub chol: Cholesky<f64, Dyn>,
    pub jittered: bool,
}

/// Cholesky with a single jitter retry.
pub(crate) fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Result<CholeskyOutcome> {
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(CholeskyOutcome {
            chol,
            jittered: false,
        });
    }
    let n = matrix.nrows();
    let jittered = matrix + DMatrix::identity(n, n) * CHOLESKY_JITTER;
    match Cholesky::new(jittered) {
        Some(chol) => Ok(CholeskyOutcome {
            chol,
            jittered: true,
        }),
        None => Err(Error::linalg(format!(
            "precision matrix of dimension {n} is not positive definite (after jitter retry)"
        ))),
    }
}

/// Draw from N(P^-1 h, P^-1) given the precision P and linear term h.
/// Returns the draw and whether the jitter retry fired.
pub(crate) fn sample_gaussian_from_precision<R: Rng>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, bool)> {
    let n = precision.nrows();
    debug_assert_eq!(linear.len(), n);
    let out = cholesky_with_jitter(precision)?;
    let mean = out.chol.solve(linear);
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    // P = L L^T, so x = mean + L^-T z has covariance P^-1.
    let l = out.chol.l();
    let spread = l
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::linalg("triangular solve failed".to_string()))?;
    Ok((mean + spread, out.jittered))
}

/// Mean and covariance of N(P^-1 h, P^-1); used by tests and oracles.
pub fn gaussian_moments_from_precision(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let out = cholesky_with_jitter(precision)?;
    let mean = out.chol.solve(linear);
    Ok((mean, out.chol.inverse()))
}

/// Gamma draw in the shape/rate convention.
pub(crate) fn sample_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::linalg(format!("invalid Gamma({shape}, rate {rate}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Wishart draw in the rate parameterization: density proportional to
/// |W|^((df - p - 1)/2) exp(-tr(R W) / 2), i.e. scale matrix R^-1 and
/// E[W] = df * R^-1. Uses the Bartlett decomposition.
pub(crate) fn sample_wishart_rate<R: Rng>(
    df: f64,
    rate: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(DMatrix<f64>, bool)> {
    let p = rate.nrows();
    if df <= (p - 1) as f64 {
        return Err(Error::linalg(format!(
            "Wishart degrees of freedom {df} too small for dimension {p}"
        )));
    }
    let out = cholesky_with_jitter(rate)?;
    // Scale = R^-1; its Cholesky factor is the inverse transpose of R's.
    let scale = out.chol.inverse();
    let scale_chol = cholesky_with_jitter(&scale)?;
    let c = scale_chol.chol.l();

    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = sample_gamma(0.5 * (df - i as f64), 0.5, rng)?;
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let factor = c * a;
    let w = &factor * factor.transpose();
    Ok((symmetrize(&w), out.jittered || scale_chol.jittered))
}

/// Force exact symmetry after accumulated products.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}
