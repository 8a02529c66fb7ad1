//! A frozen 5-subject model instance whose conditional moments are computed
//! densely from the raw data: truncated-power splines, trapezoid functional
//! rows, and explicit generalized-least-squares algebra. Nothing here calls
//! the library's design assembly or sampler internals.

use nalgebra::{DMatrix, DVector};

use mvlme::mcmc::ChainState;
use mvlme::model::{
    AssociationKind, AssociationStructure, McmcConfig, ModelSpec, Normalization, OutcomeSpec,
};
use mvlme::{LongitudinalDataset, SubjectRecord};

use super::{quantile_knots, tp_basis, trapezoid};

const TRAP_INTERVALS: usize = 50_000;

pub struct OracleInstance {
    pub data: LongitudinalDataset,
    pub spec: ModelSpec,
    pub state: ChainState,
    /// Oracle-side designs per outcome (rows over observed slots, ordered by
    /// subject then encounter).
    pub x: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
    pub y: Vec<DVector<f64>>,
    /// Subject of each row, per outcome.
    pub row_subject: Vec<Vec<usize>>,
    /// Functional rows aligned with the target outcome's rows.
    pub fx: DMatrix<f64>,
    pub fz: DMatrix<f64>,
    /// Knots recomputed by the oracle: (lo, hi, interior) per outcome.
    pub knots: Vec<(f64, f64, Vec<f64>)>,
}

fn lcg(seed: &mut u64) -> f64 {
    // Small deterministic generator for building the fixture; quality is
    // irrelevant, only determinism matters.
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
}

pub fn build_dataset() -> LongitudinalDataset {
    let mut seed = 20_240_601u64;
    let mut subjects = Vec::new();
    for i in 0..5 {
        let n_enc = 4 + (i % 2);
        let mut times: Vec<f64> = (0..n_enc).map(|_| 6.0 + 14.0 * lcg(&mut seed)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let w = if i % 2 == 0 { 1.0 } else { 0.0 };
        let y1: Vec<Option<f64>> = times
            .iter()
            .enumerate()
            .map(|(j, t)| {
                // A couple of missing target slots.
                if (i, j) == (1, 2) || (i, j) == (3, 0) {
                    None
                } else {
                    Some(78.0 - 1.5 * t + 2.0 * w + 6.0 * (lcg(&mut seed) - 0.5))
                }
            })
            .collect();
        let y2: Vec<Option<f64>> = times
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if (i, j) == (2, 1) {
                    None
                } else {
                    Some(0.45 + 0.012 * t + 0.1 * (lcg(&mut seed) - 0.5))
                }
            })
            .collect();
        subjects.push(SubjectRecord {
            id: format!("s{i}"),
            times: times.clone(),
            outcomes: vec![y1, y2],
            covariates: times.iter().map(|_| vec![w]).collect(),
            group: None,
        });
    }
    LongitudinalDataset::new(
        subjects,
        vec!["y1".into(), "y2".into()],
        vec!["w".into()],
    )
    .unwrap()
}

pub fn build_spec() -> ModelSpec {
    ModelSpec {
        outcomes: vec![
            OutcomeSpec {
                name: "y1".into(),
                covariates: vec!["w".into()],
                spline_df: 2,
                random_intercept: true,
                random_spline: true,
            },
            OutcomeSpec {
                name: "y2".into(),
                covariates: vec![],
                spline_df: 2,
                random_intercept: true,
                random_spline: true,
            },
        ],
        association: AssociationStructure {
            kind: AssociationKind::Auc,
            source: 1,
            target: 0,
            window_d: None,
            normalize_by: Normalization::OneOverT,
        },
        re_cross_outcome_correlation: false,
        priors: Default::default(),
        mcmc: McmcConfig {
            n_chains: 1,
            n_iter: 100,
            burn_in: 10,
            thin: 1,
            adapt: 10,
            seed: 404,
        },
    }
}

/// A fixed, non-trivial parameter state.
pub fn frozen_state(n_subjects: usize) -> ChainState {
    let b: Vec<DVector<f64>> = (0..n_subjects)
        .map(|i| {
            let s = i as f64;
            DVector::from_vec(vec![
                2.0 - s,
                0.3 * (s - 2.0),
                0.05 * (s - 1.0),
                0.01 * (2.0 - s),
                0.004 * s,
                -0.006 * (s - 3.0),
            ])
        })
        .collect();
    let mut d_inv = DMatrix::zeros(6, 6);
    // Block y1: precision of vars around (9, 1, 0.5) with mild correlation.
    let block1 = [
        [0.2, 0.02, 0.0],
        [0.02, 1.1, -0.05],
        [0.0, -0.05, 2.2],
    ];
    // Block y2: tight precisions.
    let block2 = [
        [110.0, 4.0, 0.0],
        [4.0, 420.0, 7.0],
        [0.0, 7.0, 650.0],
    ];
    for i in 0..3 {
        for j in 0..3 {
            d_inv[(i, j)] = block1[i][j];
            d_inv[(3 + i, 3 + j)] = block2[i][j];
        }
    }
    ChainState {
        beta: vec![
            DVector::from_vec(vec![75.0, -2.0, 1.0, 3.0]),
            DVector::from_vec(vec![0.5, 0.1, -0.05]),
        ],
        alpha: Some(-4.0),
        b,
        tau: vec![0.04, 400.0],
        d_inv,
        scale_hyper: vec![1.0, 0.8, 1.2, 0.9, 1.1, 1.0],
        jitter_retries: 0,
    }
}

impl OracleInstance {
    pub fn build() -> Self {
        let data = build_dataset();
        let spec = build_spec();
        let state = frozen_state(data.n_subjects());

        // Oracle knots from each outcome's observed times.
        let mut knots = Vec::new();
        for k in 0..2 {
            let times = data.observed_times(k);
            knots.push(quantile_knots(&times, 2));
        }

        let mut x = Vec::new();
        let mut z = Vec::new();
        let mut y = Vec::new();
        let mut row_subject = Vec::new();
        for k in 0..2 {
            let (lo, hi, interior) = &knots[k];
            let mut xr: Vec<Vec<f64>> = Vec::new();
            let mut zr: Vec<Vec<f64>> = Vec::new();
            let mut yv = Vec::new();
            let mut subjects = Vec::new();
            for (s, subject) in data.subjects.iter().enumerate() {
                for (j, slot) in subject.outcomes[k].iter().enumerate() {
                    let Some(value) = slot else { continue };
                    let t = subject.times[j];
                    let basis = tp_basis(t, *lo, *hi, interior);
                    let mut row = vec![1.0, basis[0], basis[1]];
                    if k == 0 {
                        row.push(subject.covariates[j][0]);
                    }
                    zr.push(vec![1.0, basis[0], basis[1]]);
                    xr.push(row);
                    yv.push(*value);
                    subjects.push(s);
                }
            }
            let p = if k == 0 { 4 } else { 3 };
            x.push(DMatrix::from_row_iterator(
                yv.len(),
                p,
                xr.into_iter().flatten(),
            ));
            z.push(DMatrix::from_row_iterator(
                yv.len(),
                3,
                zr.into_iter().flatten(),
            ));
            y.push(DVector::from_vec(yv));
            row_subject.push(subjects);
        }

        // Functional rows: normalized full-history AUC of the source design
        // (intercept integrates to t/t = 1; spline columns by quadrature).
        let (lo2, hi2, interior2) = knots[1].clone();
        let n_t = y[0].len();
        let mut fx = DMatrix::zeros(n_t, 3);
        let mut fz = DMatrix::zeros(n_t, 3);
        let mut r = 0;
        for subject in &data.subjects {
            for (j, slot) in subject.outcomes[0].iter().enumerate() {
                if slot.is_none() {
                    continue;
                }
                let t = subject.times[j];
                fx[(r, 0)] = 1.0;
                for col in 0..2 {
                    let integral = trapezoid(
                        |s| tp_basis(s, lo2, hi2, &interior2)[col],
                        0.0,
                        t,
                        TRAP_INTERVALS,
                    );
                    fx[(r, col + 1)] = integral / t;
                }
                fz.set_row(r, &fx.row(r).clone_owned());
                r += 1;
            }
        }
        assert_eq!(r, n_t);

        OracleInstance {
            data,
            spec,
            state,
            x,
            z,
            y,
            row_subject,
            fx,
            fz,
            knots,
        }
    }

    fn re_offset(&self, k: usize) -> usize {
        k * 3
    }

    /// Z b over outcome-k rows.
    fn zb(&self, k: usize) -> DVector<f64> {
        let n = self.y[k].len();
        let off = self.re_offset(k);
        DVector::from_fn(n, |i, _| {
            let b = &self.state.b[self.row_subject[k][i]];
            (0..3).map(|c| self.z[k][(i, c)] * b[off + c]).sum()
        })
    }

    /// F_z b_q over target rows.
    fn fzb(&self) -> DVector<f64> {
        let n = self.y[0].len();
        DVector::from_fn(n, |i, _| {
            let b = &self.state.b[self.row_subject[0][i]];
            (0..3).map(|c| self.fz[(i, c)] * b[3 + c]).sum()
        })
    }

    /// The realized association covariate over target rows.
    pub fn functional_covariate(&self) -> DVector<f64> {
        &self.fx * &self.state.beta[1] + self.fzb()
    }

    /// Full residual of outcome k at the frozen state.
    pub fn residual(&self, k: usize) -> DVector<f64> {
        let mut resid = &self.y[k] - &self.x[k] * &self.state.beta[k] - self.zb(k);
        if k == 0 {
            resid -= self.functional_covariate() * self.state.alpha.unwrap();
        }
        resid
    }

    /// Dense conditional moments of beta_k.
    pub fn beta_moments(&self, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let tau = self.state.tau[k];
        let p = self.x[k].ncols();
        let mut precision = self.x[k].transpose() * &self.x[k] * tau;
        for i in 0..p {
            precision[(i, i)] += 1.0 / self.spec.priors.beta_prior_variance;
        }
        let mut resid = &self.y[k] - self.zb(k);
        if k == 0 {
            resid -= self.functional_covariate() * self.state.alpha.unwrap();
        }
        let mut linear = self.x[k].transpose() * resid * tau;
        if k == 1 {
            let alpha = self.state.alpha.unwrap();
            let tau_t = self.state.tau[0];
            precision += self.fx.transpose() * &self.fx * (tau_t * alpha * alpha);
            let resid_t =
                &self.y[0] - &self.x[0] * &self.state.beta[0] - self.zb(0) - self.fzb() * alpha;
            linear += self.fx.transpose() * resid_t * (tau_t * alpha);
        }
        super::dense_gaussian_moments(&precision, &linear)
    }

    /// Dense conditional moments of alpha.
    pub fn alpha_moments(&self) -> (f64, f64) {
        let v = self.functional_covariate();
        let resid = &self.y[0] - &self.x[0] * &self.state.beta[0] - self.zb(0);
        let tau = self.state.tau[0];
        let precision = 1.0 / self.spec.priors.alpha_prior_variance + tau * v.dot(&v);
        (tau * v.dot(&resid) / precision, 1.0 / precision)
    }

    /// Dense conditional moments of one subject's stacked random effects.
    pub fn b_moments(&self, subject: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mut precision = self.state.d_inv.clone();
        let mut linear = DVector::zeros(6);
        let alpha = self.state.alpha.unwrap();
        for k in 0..2 {
            let tau = self.state.tau[k];
            let off = self.re_offset(k);
            for (i, &s) in self.row_subject[k].iter().enumerate() {
                if s != subject {
                    continue;
                }
                let mut u = DVector::zeros(6);
                for c in 0..3 {
                    u[off + c] = self.z[k][(i, c)];
                }
                let mut resid = self.y[k][i];
                for (j, beta) in self.state.beta[k].iter().enumerate() {
                    resid -= self.x[k][(i, j)] * beta;
                }
                if k == 0 {
                    let fixed: f64 = (0..3)
                        .map(|j| self.fx[(i, j)] * self.state.beta[1][j])
                        .sum();
                    resid -= alpha * fixed;
                    for c in 0..3 {
                        u[3 + c] += alpha * self.fz[(i, c)];
                    }
                }
                precision += &u * u.transpose() * tau;
                linear += u * (tau * resid);
            }
        }
        super::dense_gaussian_moments(&precision, &linear)
    }

    /// Gamma(shape, rate) of the tau_k conditional.
    pub fn tau_params(&self, k: usize) -> (f64, f64) {
        let resid = self.residual(k);
        (
            self.spec.priors.error_precision_shape + 0.5 * self.y[k].len() as f64,
            self.spec.priors.error_precision_rate + 0.5 * resid.dot(&resid),
        )
    }

    /// Wishart (df, rate) of each RE-precision block at the frozen state.
    pub fn re_block_params(&self) -> Vec<(std::ops::Range<usize>, f64, DMatrix<f64>)> {
        let n = self.data.n_subjects() as f64;
        let mult = self.spec.priors.scale_hyper_multiplier;
        [0..3, 3..6]
            .into_iter()
            .map(|block: std::ops::Range<usize>| {
                let p = block.len();
                let df = p as f64 + self.spec.priors.wishart_df_offset as f64 + n;
                let mut rate = DMatrix::zeros(p, p);
                for (i, l) in block.clone().enumerate() {
                    rate[(i, i)] = mult * self.state.scale_hyper[l];
                }
                for b in &self.state.b {
                    for (i, li) in block.clone().enumerate() {
                        for (j, lj) in block.clone().enumerate() {
                            rate[(i, j)] += b[li] * b[lj];
                        }
                    }
                }
                (block, df, rate)
            })
            .collect()
    }
}
