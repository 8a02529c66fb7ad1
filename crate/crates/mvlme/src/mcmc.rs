//! Blocked Gibbs sampler for the multivariate mixed-effects model.
//!
//! Every full conditional is conjugate: Gaussian for fixed effects, the
//! association parameter, and random effects; Gamma for error precisions and
//! the Wishart-scale hyperparameters; Wishart for the random-effect precision.
//! The sweep order is fixed (beta_1..beta_K, alpha, b_i, tau_k, D^-1, scale
//! hyperparameters) so a (seed, chain index, config) triple fully determines
//! every draw.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::design::DesignSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{McmcConfig, ModelSpec};

/// Full parameter state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    /// Fixed-effect coefficient vectors per outcome.
    pub beta: Vec<DVector<f64>>,
    /// Association parameter; absent when the model links outcomes through
    /// random effects only.
    pub alpha: Option<f64>,
    /// Stacked per-subject random effects (length = total RE components).
    pub b: Vec<DVector<f64>>,
    /// Error precisions per outcome.
    pub tau: Vec<f64>,
    /// Random-effect precision matrix (block-diagonal when cross-outcome
    /// correlation is off).
    pub d_inv: DMatrix<f64>,
    /// Diagonal hyperparameters of the Wishart rate matrix.
    pub scale_hyper: Vec<f64>,
    /// Numerical bookkeeping (jitter retries) accumulated over updates.
    pub jitter_retries: u64,
}

/// Sidecar information of a finished chain.
#[derive(Debug, Clone)]
pub struct ChainMeta {
    pub seed: u64,
    pub chain_index: usize,
    pub config: McmcConfig,
    pub jitter_retries: u64,
}

/// Retained draws of one chain: rows are retained iterations, columns are
/// named parameters.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub meta: ChainMeta,
}

impl ChainDraws {
    pub fn n_retained(&self) -> usize {
        self.draws.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        Some(self.draws.iter().map(|row| row[idx]).collect())
    }
}

/// Deterministic per-chain RNG: one seed, one ChaCha stream per chain.
pub fn chain_rng(seed: u64, chain_index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chain_index as u64 + 1);
    rng
}

/// Blocked Gibbs sampler bound to one design/spec pair.
pub struct GibbsSampler<'a> {
    design: &'a DesignSet,
    spec: &'a ModelSpec,
    xtx: Vec<DMatrix<f64>>,
    ftf: Option<DMatrix<f64>>,
    param_names: Vec<String>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(design: &'a DesignSet, spec: &'a ModelSpec) -> Result<Self> {
        if design.association != spec.association
            || design.outcome_specs.len() != spec.outcomes.len()
        {
            return Err(Error::config(
                "design was built from a different model specification",
            ));
        }
        let xtx = design
            .outcomes
            .iter()
            .map(|o| o.x.transpose() * &o.x)
            .collect();
        let ftf = design
            .functional
            .as_ref()
            .map(|f| f.f_x.transpose() * &f.f_x);

        let mut param_names = Vec::new();
        for (k, outcome) in spec.outcomes.iter().enumerate() {
            for col in &design.fixed_names[k] {
                param_names.push(format!("beta_{}_{col}", outcome.name));
            }
        }
        if spec.association.has_alpha() {
            param_names.push("alpha".to_string());
        }
        for outcome in &spec.outcomes {
            param_names.push(format!("sigma_{}", outcome.name));
        }
        let comp = &design.re.component_names;
        for block in &design.re.blocks {
            for i in block.clone() {
                for j in i..block.end {
                    if i == j {
                        param_names.push(format!("re_var_{}", comp[i]));
                    } else {
                        param_names.push(format!("re_cov_{}_{}", comp[i], comp[j]));
                    }
                }
            }
        }

        Ok(GibbsSampler {
            design,
            spec,
            xtx,
            ftf,
            param_names,
        })
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn design(&self) -> &DesignSet {
        self.design
    }

    /// Deterministic starting point: per-outcome ridge-stabilized least
    /// squares for beta and tau, zeros elsewhere, identity RE precision.
    pub fn initial_state(&self) -> Result<ChainState> {
        let mut beta = Vec::with_capacity(self.design.n_outcomes());
        let mut tau = Vec::with_capacity(self.design.n_outcomes());
        for (k, o) in self.design.outcomes.iter().enumerate() {
            let p = o.x.ncols();
            let mut gram = self.xtx[k].clone();
            for i in 0..p {
                gram[(i, i)] += 1e-8;
            }
            let xty = o.x.transpose() * &o.y;
            let chol = linalg::cholesky_with_jitter(&gram)?;
            let b = chol.chol.solve(&xty);
            let resid = &o.y - &o.x * &b;
            let n = o.n_rows().max(1) as f64;
            let variance = (resid.dot(&resid) / n).max(1e-12);
            tau.push((1.0 / variance).clamp(1e-6, 1e6));
            beta.push(b);
        }
        let r = self.design.re.total;
        Ok(ChainState {
            beta,
            alpha: self.spec.association.has_alpha().then_some(0.0),
            b: vec![DVector::zeros(r); self.design.n_subjects],
            tau,
            d_inv: DMatrix::identity(r, r),
            scale_hyper: vec![1.0; r],
            jitter_retries: 0,
        })
    }

    pub fn check_state(&self, state: &ChainState) -> Result<()> {
        if state.beta.len() != self.design.n_outcomes()
            || state.tau.len() != self.design.n_outcomes()
        {
            return Err(Error::dimension("state outcome count mismatch"));
        }
        for (k, o) in self.design.outcomes.iter().enumerate() {
            if state.beta[k].len() != o.x.ncols() {
                return Err(Error::dimension(format!(
                    "beta[{k}] has length {}, design expects {}",
                    state.beta[k].len(),
                    o.x.ncols()
                )));
            }
        }
        if state.b.len() != self.design.n_subjects {
            return Err(Error::dimension("state subject count mismatch"));
        }
        let r = self.design.re.total;
        if state.d_inv.nrows() != r || state.scale_hyper.len() != r {
            return Err(Error::dimension("random-effect dimension mismatch"));
        }
        if state.alpha.is_some() != self.spec.association.has_alpha() {
            return Err(Error::dimension(
                "alpha presence does not match the association structure",
            ));
        }
        Ok(())
    }

    // ---- mean components -------------------------------------------------

    fn xb(&self, state: &ChainState, k: usize) -> DVector<f64> {
        &self.design.outcomes[k].x * &state.beta[k]
    }

    fn zb(&self, state: &ChainState, k: usize) -> DVector<f64> {
        let o = &self.design.outcomes[k];
        let range = self.design.re.outcome_range(k);
        let mut out = DVector::zeros(o.n_rows());
        if range.is_empty() {
            return out;
        }
        for (i, row) in o.rows.iter().enumerate() {
            let b = &state.b[row.subject];
            let mut acc = 0.0;
            for (c, l) in range.clone().enumerate() {
                acc += o.z[(i, c)] * b[l];
            }
            out[i] = acc;
        }
        out
    }

    /// F_x beta_q over target rows.
    fn functional_fixed(&self, state: &ChainState) -> Option<DVector<f64>> {
        let f = self.design.functional.as_ref()?;
        Some(&f.f_x * &state.beta[self.design.association.source])
    }

    /// F_z b_iq over target rows.
    fn functional_random(&self, state: &ChainState) -> Option<DVector<f64>> {
        let f = self.design.functional.as_ref()?;
        let q = self.design.association.source;
        let range = self.design.re.outcome_range(q);
        let target = self.design.association.target;
        let rows = &self.design.outcomes[target].rows;
        let mut out = DVector::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let b = &state.b[row.subject];
            let mut acc = 0.0;
            for (c, l) in range.clone().enumerate() {
                acc += f.f_z[(i, c)] * b[l];
            }
            out[i] = acc;
        }
        Some(out)
    }

    /// The realized association covariate F_x beta_q + F_z b_iq.
    pub fn functional_covariate(&self, state: &ChainState) -> Option<DVector<f64>> {
        Some(self.functional_fixed(state)? + self.functional_random(state)?)
    }

    /// Full fitted mean for outcome k, including the alpha term on the target.
    pub fn fitted(&self, state: &ChainState, k: usize) -> DVector<f64> {
        let mut m = self.xb(state, k) + self.zb(state, k);
        if self.design.target() == Some(k) {
            let alpha = state.alpha.expect("alpha present when target exists");
            m += self.functional_covariate(state).expect("functional design") * alpha;
        }
        m
    }

    // ---- Gibbs blocks ----------------------------------------------------

    /// Conditional precision and linear term for beta_k. For the source
    /// outcome the target rows contribute through alpha * F_x.
    fn beta_conditional(&self, state: &ChainState, k: usize) -> (DMatrix<f64>, DVector<f64>) {
        let o = &self.design.outcomes[k];
        let p = o.x.ncols();
        let prior_precision = 1.0 / self.spec.priors.beta_prior_variance;
        let mut precision = &self.xtx[k] * state.tau[k];
        for i in 0..p {
            precision[(i, i)] += prior_precision;
        }
        let mut resid = &o.y - self.zb(state, k);
        if self.design.target() == Some(k) {
            let alpha = state.alpha.expect("alpha present");
            resid -= self.functional_covariate(state).expect("functional design") * alpha;
        }
        let mut linear = o.x.transpose() * resid * state.tau[k];

        if self.design.source() == Some(k) {
            let alpha = state.alpha.expect("alpha present");
            let target = self.design.association.target;
            let tau_t = state.tau[target];
            let f = self.design.functional.as_ref().expect("functional design");
            let ftf = self.ftf.as_ref().expect("precomputed F_x gram");
            precision += ftf * (tau_t * alpha * alpha);
            let to = &self.design.outcomes[target];
            let resid_t = &to.y
                - self.xb(state, target)
                - self.zb(state, target)
                - self.functional_random(state).expect("functional design") * alpha;
            linear += f.f_x.transpose() * resid_t * (tau_t * alpha);
        }
        (precision, linear)
    }

    /// Exact Gaussian moments of the beta_k full conditional.
    pub fn beta_conditional_moments(
        &self,
        state: &ChainState,
        k: usize,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_state(state)?;
        let (precision, linear) = self.beta_conditional(state, k);
        linalg::gaussian_moments_from_precision(&precision, &linear)
    }

    pub fn update_fixed_effects(
        &self,
        state: &mut ChainState,
        k: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        let (precision, linear) = self.beta_conditional(state, k);
        let (draw, jittered) = linalg::sample_gaussian_from_precision(&precision, &linear, rng)?;
        if jittered {
            state.jitter_retries += 1;
            log::warn!("jitter retry in fixed-effects update for outcome {k}");
        }
        state.beta[k] = draw;
        Ok(())
    }

    /// Scalar Gaussian conditional for alpha.
    fn alpha_conditional(&self, state: &ChainState) -> Result<(f64, f64)> {
        if !self.spec.association.has_alpha() {
            return Err(Error::config(
                "association update requested but the model has no alpha",
            ));
        }
        let target = self.design.association.target;
        let v = self.functional_covariate(state).expect("functional design");
        let o = &self.design.outcomes[target];
        let resid = &o.y - self.xb(state, target) - self.zb(state, target);
        let tau = state.tau[target];
        let precision = 1.0 / self.spec.priors.alpha_prior_variance + tau * v.dot(&v);
        if !(precision > 0.0) || !precision.is_finite() {
            return Err(Error::linalg(
                "association conditional has non-positive precision".to_string(),
            ));
        }
        let mean = tau * v.dot(&resid) / precision;
        Ok((mean, precision))
    }

    /// Mean and variance of the alpha full conditional.
    pub fn alpha_conditional_moments(&self, state: &ChainState) -> Result<(f64, f64)> {
        self.check_state(state)?;
        let (mean, precision) = self.alpha_conditional(state)?;
        Ok((mean, 1.0 / precision))
    }

    pub fn update_association(
        &self,
        state: &mut ChainState,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        let (mean, precision) = self.alpha_conditional(state)?;
        let z: f64 = StandardNormal.sample(rng);
        state.alpha = Some(mean + z / precision.sqrt());
        Ok(())
    }

    /// Conditional precision and linear term for one subject's stacked
    /// random effects, combining all outcomes' rows; target rows carry the
    /// alpha-weighted F_z block for the source outcome.
    fn random_effects_conditional(
        &self,
        state: &ChainState,
        subject: usize,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let r = self.design.re.total;
        let mut precision = state.d_inv.clone();
        let mut linear = DVector::zeros(r);
        let target = self.design.target();
        let alpha = state.alpha.unwrap_or(0.0);
        let mut u = DVector::zeros(r);
        for (k, o) in self.design.outcomes.iter().enumerate() {
            let range = self.design.re.outcome_range(k);
            let tau = state.tau[k];
            for &row in &o.subject_rows[subject] {
                u.fill(0.0);
                for (c, l) in range.clone().enumerate() {
                    u[l] = o.z[(row, c)];
                }
                let mut resid = o.y[row];
                for (j, &b) in state.beta[k].iter().enumerate() {
                    resid -= o.x[(row, j)] * b;
                }
                if target == Some(k) {
                    let f = self.design.functional.as_ref().expect("functional design");
                    let q = self.design.association.source;
                    let beta_q = &state.beta[q];
                    let mut fixed = 0.0;
                    for (j, &bq) in beta_q.iter().enumerate() {
                        fixed += f.f_x[(row, j)] * bq;
                    }
                    resid -= alpha * fixed;
                    let q_range = self.design.re.outcome_range(q);
                    for (c, l) in q_range.enumerate() {
                        u[l] += alpha * f.f_z[(row, c)];
                    }
                }
                // precision += tau * u u'; linear += tau * resid * u
                for a in 0..r {
                    if u[a] == 0.0 {
                        continue;
                    }
                    let ta = tau * u[a];
                    linear[a] += ta * resid;
                    for c in 0..r {
                        precision[(a, c)] += ta * u[c];
                    }
                }
            }
        }
        (precision, linear)
    }

    /// Exact Gaussian moments of one subject's random-effect conditional.
    pub fn random_effects_conditional_moments(
        &self,
        state: &ChainState,
        subject: usize,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_state(state)?;
        let (precision, linear) = self.random_effects_conditional(state, subject);
        linalg::gaussian_moments_from_precision(&precision, &linear)
    }

    pub fn update_random_effects(
        &self,
        state: &mut ChainState,
        subject: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        if self.design.re.total == 0 {
            return Ok(());
        }
        let (precision, linear) = self.random_effects_conditional(state, subject);
        let (draw, jittered) = linalg::sample_gaussian_from_precision(&precision, &linear, rng)?;
        if jittered {
            state.jitter_retries += 1;
            log::warn!("jitter retry in random-effects update for subject {subject}");
        }
        state.b[subject] = draw;
        Ok(())
    }

    /// Precision and linear term of the joint Gaussian conditional of
    /// (beta_target, alpha) with the target outcome's random effects
    /// integrated out of the likelihood (their conditional prior given the
    /// other components supplies the marginal covariance). The association
    /// parameter and the target-outcome random effects are nearly confounded
    /// whenever the functional covariate's subject-level variation lies in
    /// the span of those random effects, and one-at-a-time draws then crawl
    /// along the ridge; the collapsed block restores mixing while leaving
    /// the stationary distribution untouched because the random effects are
    /// redrawn from their full conditional immediately afterwards.
    fn target_block_conditional(
        &self,
        state: &ChainState,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let target = self
            .design
            .target()
            .ok_or_else(|| Error::config("collapsed update requested without an association"))?;
        let o = &self.design.outcomes[target];
        let p = o.x.ncols();
        let dim = p + 1;
        let tau = state.tau[target];
        let v = self.functional_covariate(state).expect("functional design");

        let t_range = self.design.re.outcome_range(target);
        let r_t = t_range.len();
        // Conditional prior of the target-block random effects given the
        // other components: N(-P11^-1 P12 b_other, P11^-1).
        let (cond_cov, cond_mean): (DMatrix<f64>, Vec<DVector<f64>>) = if r_t == 0 {
            (DMatrix::zeros(0, 0), vec![DVector::zeros(0); state.b.len()])
        } else {
            let p11 = state.d_inv.view((t_range.start, t_range.start), (r_t, r_t)).into_owned();
            let chol = linalg::cholesky_with_jitter(&p11)?;
            let cov = chol.chol.inverse();
            let others: Vec<usize> = (0..self.design.re.total)
                .filter(|l| !t_range.contains(l))
                .collect();
            let means = state
                .b
                .iter()
                .map(|b| {
                    if others.is_empty() {
                        DVector::zeros(r_t)
                    } else {
                        let mut cross = DVector::zeros(r_t);
                        for (i, li) in t_range.clone().enumerate() {
                            for &lo in &others {
                                cross[i] += state.d_inv[(li, lo)] * b[lo];
                            }
                        }
                        -(&cov * cross)
                    }
                })
                .collect();
            (cov, means)
        };

        let mut precision = DMatrix::zeros(dim, dim);
        for j in 0..p {
            precision[(j, j)] = 1.0 / self.spec.priors.beta_prior_variance;
        }
        precision[(p, p)] = 1.0 / self.spec.priors.alpha_prior_variance;
        let mut linear = DVector::zeros(dim);

        for subject in 0..self.design.n_subjects {
            let rows = &o.subject_rows[subject];
            if rows.is_empty() {
                continue;
            }
            let n_i = rows.len();
            let mut a = DMatrix::zeros(n_i, dim);
            let mut resid = DVector::zeros(n_i);
            let mut z_i = DMatrix::zeros(n_i, r_t);
            for (ri, &row) in rows.iter().enumerate() {
                for j in 0..p {
                    a[(ri, j)] = o.x[(row, j)];
                }
                a[(ri, p)] = v[row];
                resid[ri] = o.y[row];
                for c in 0..r_t {
                    z_i[(ri, c)] = o.z[(row, c)];
                }
            }
            // Marginal covariance of this subject's target rows.
            let mut v_i = DMatrix::identity(n_i, n_i) / tau;
            if r_t > 0 {
                v_i += &z_i * &cond_cov * z_i.transpose();
                resid -= &z_i * &cond_mean[subject];
            }
            let chol = linalg::cholesky_with_jitter(&v_i)?;
            let w = chol.chol.solve(&a);
            precision += a.transpose() * &w;
            linear += w.transpose() * resid;
        }
        Ok((precision, linear))
    }

    /// Exact Gaussian moments of the collapsed (beta_target, alpha) block;
    /// the last coordinate is alpha.
    pub fn target_block_moments(
        &self,
        state: &ChainState,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_state(state)?;
        let (precision, linear) = self.target_block_conditional(state)?;
        linalg::gaussian_moments_from_precision(&precision, &linear)
    }

    /// Joint draw of (beta_target, alpha) from the collapsed conditional.
    /// The target outcome's random effects must be redrawn from their full
    /// conditional before any other block consumes them; [`Self::sweep`]
    /// does exactly that.
    pub fn update_target_and_association(
        &self,
        state: &mut ChainState,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        let target = self
            .design
            .target()
            .ok_or_else(|| Error::config("collapsed update requested without an association"))?;
        let (precision, linear) = self.target_block_conditional(state)?;
        let (draw, jittered) = linalg::sample_gaussian_from_precision(&precision, &linear, rng)?;
        if jittered {
            state.jitter_retries += 1;
            log::warn!("jitter retry in collapsed target update");
        }
        let p = self.design.outcomes[target].x.ncols();
        state.beta[target] = draw.rows(0, p).into_owned();
        state.alpha = Some(draw[p]);
        Ok(())
    }

    /// Precision and linear term of the source outcome's fixed effects with
    /// every random effect integrated out of the likelihood: each subject's
    /// stacked source and target rows are jointly Gaussian with covariance
    /// U D U' + noise, where the alpha-weighted functional rows enter U.
    /// Same ridge rationale as the collapsed target block, here for the
    /// coupling of the source coefficients with their own random effects.
    fn source_marginal_conditional(
        &self,
        state: &ChainState,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let source = self
            .design
            .source()
            .ok_or_else(|| Error::config("marginal source update requires an association"))?;
        let target = self.design.association.target;
        let alpha = state.alpha.expect("alpha present");
        let so = &self.design.outcomes[source];
        let to = &self.design.outcomes[target];
        let f = self.design.functional.as_ref().expect("functional design");
        let p = so.x.ncols();
        let r = self.design.re.total;
        let s_range = self.design.re.outcome_range(source);
        let t_range = self.design.re.outcome_range(target);

        let d = if r > 0 {
            linalg::cholesky_with_jitter(&state.d_inv)?.chol.inverse()
        } else {
            DMatrix::zeros(0, 0)
        };

        let mut precision = DMatrix::zeros(p, p);
        for j in 0..p {
            precision[(j, j)] = 1.0 / self.spec.priors.beta_prior_variance;
        }
        let mut linear = DVector::zeros(p);

        for subject in 0..self.design.n_subjects {
            let source_rows = &so.subject_rows[subject];
            let target_rows = &to.subject_rows[subject];
            let n_i = source_rows.len() + target_rows.len();
            if n_i == 0 {
                continue;
            }
            // Regressor block A (n_i x p), response with known offsets
            // removed, RE loading U (n_i x r), and noise diagonal.
            let mut a = DMatrix::zeros(n_i, p);
            let mut resid = DVector::zeros(n_i);
            let mut u = DMatrix::zeros(n_i, r);
            let mut noise = DVector::zeros(n_i);
            for (ri, &row) in source_rows.iter().enumerate() {
                for j in 0..p {
                    a[(ri, j)] = so.x[(row, j)];
                }
                resid[ri] = so.y[row];
                for (c, l) in s_range.clone().enumerate() {
                    u[(ri, l)] = so.z[(row, c)];
                }
                noise[ri] = 1.0 / state.tau[source];
            }
            let off = source_rows.len();
            for (ri, &row) in target_rows.iter().enumerate() {
                for j in 0..p {
                    a[(off + ri, j)] = alpha * f.f_x[(row, j)];
                }
                let mut y = to.y[row];
                for (j, beta) in state.beta[target].iter().enumerate() {
                    y -= to.x[(row, j)] * beta;
                }
                resid[off + ri] = y;
                for (c, l) in t_range.clone().enumerate() {
                    u[(off + ri, l)] = to.z[(row, c)];
                }
                for (c, l) in s_range.clone().enumerate() {
                    u[(off + ri, l)] += alpha * f.f_z[(row, c)];
                }
                noise[off + ri] = 1.0 / state.tau[target];
            }
            let mut v_i = if r > 0 {
                &u * &d * u.transpose()
            } else {
                DMatrix::zeros(n_i, n_i)
            };
            for i in 0..n_i {
                v_i[(i, i)] += noise[i];
            }
            let chol = linalg::cholesky_with_jitter(&v_i)?;
            let w = chol.chol.solve(&a);
            precision += a.transpose() * &w;
            linear += w.transpose() * resid;
        }
        Ok((precision, linear))
    }

    /// Exact Gaussian moments of the marginal source-coefficient block.
    pub fn source_marginal_moments(
        &self,
        state: &ChainState,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_state(state)?;
        let (precision, linear) = self.source_marginal_conditional(state)?;
        linalg::gaussian_moments_from_precision(&precision, &linear)
    }

    /// Draw the source outcome's fixed effects from the random-effect
    /// marginal conditional. The random effects must be redrawn before any
    /// other block consumes them; [`Self::sweep`] does that.
    pub fn update_source_marginal(
        &self,
        state: &mut ChainState,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        let source = self
            .design
            .source()
            .ok_or_else(|| Error::config("marginal source update requires an association"))?;
        let (precision, linear) = self.source_marginal_conditional(state)?;
        let (draw, jittered) = linalg::sample_gaussian_from_precision(&precision, &linear, rng)?;
        if jittered {
            state.jitter_retries += 1;
            log::warn!("jitter retry in marginal source update");
        }
        state.beta[source] = draw;
        Ok(())
    }

    /// Gamma(shape, rate) parameters of the tau_k full conditional.
    pub fn error_precision_conditional(&self, state: &ChainState, k: usize) -> (f64, f64) {
        let o = &self.design.outcomes[k];
        let resid = &o.y - self.fitted(state, k);
        let ssr = resid.dot(&resid);
        debug_assert!(ssr >= 0.0, "negative residual sum of squares");
        let shape = self.spec.priors.error_precision_shape + 0.5 * o.n_rows() as f64;
        let rate = self.spec.priors.error_precision_rate + 0.5 * ssr;
        (shape, rate)
    }

    pub fn update_error_precisions(
        &self,
        state: &mut ChainState,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        for k in 0..self.design.n_outcomes() {
            let (shape, rate) = self.error_precision_conditional(state, k);
            state.tau[k] = linalg::sample_gamma(shape, rate, rng)?;
        }
        Ok(())
    }

    /// Per-block Wishart conditionals for D^-1: degrees of freedom and rate
    /// matrix (prior rate diag(multiplier * a_l) plus the scatter of the
    /// current random effects).
    pub fn re_precision_conditionals(
        &self,
        state: &ChainState,
    ) -> Vec<(std::ops::Range<usize>, f64, DMatrix<f64>)> {
        let n = self.design.n_subjects as f64;
        let mult = self.spec.priors.scale_hyper_multiplier;
        self.design
            .re
            .blocks
            .iter()
            .map(|block| {
                let p = block.len();
                let prior_df = p as f64 + self.spec.priors.wishart_df_offset as f64;
                let mut rate = DMatrix::zeros(p, p);
                for (i, l) in block.clone().enumerate() {
                    rate[(i, i)] = mult * state.scale_hyper[l];
                }
                for b in &state.b {
                    for (i, li) in block.clone().enumerate() {
                        for (j, lj) in block.clone().enumerate() {
                            rate[(i, j)] += b[li] * b[lj];
                        }
                    }
                }
                (block.clone(), prior_df + n, rate)
            })
            .collect()
    }

    /// Conjugate Wishart update of D^-1 followed by the conjugate Gamma
    /// update of each diagonal scale hyperparameter.
    pub fn update_re_precision(
        &self,
        state: &mut ChainState,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        if self.design.re.total == 0 {
            return Ok(());
        }
        let priors = &self.spec.priors;
        for (block, df, rate) in self.re_precision_conditionals(state) {
            let (w, jittered) = linalg::sample_wishart_rate(df, &rate, rng)?;
            if jittered {
                state.jitter_retries += 1;
                log::warn!("jitter retry in RE-precision update");
            }
            for (i, li) in block.clone().enumerate() {
                for (j, lj) in block.clone().enumerate() {
                    state.d_inv[(li, lj)] = w[(i, j)];
                }
            }
            // Hyperparameter update: the Wishart normalizer contributes
            // a_l^(prior_df / 2), the trace term contributes
            // exp(-multiplier * a_l * W_ll / 2).
            let prior_df = block.len() as f64 + priors.wishart_df_offset as f64;
            for (i, l) in block.clone().enumerate() {
                let shape = priors.scale_hyper_shape + 0.5 * prior_df;
                let rate_l = priors.scale_hyper_rate + 0.5 * priors.scale_hyper_multiplier * w[(i, i)];
                state.scale_hyper[l] = linalg::sample_gamma(shape, rate_l, rng)?;
            }
        }
        Ok(())
    }

    /// Gaussian log-likelihood conditional on the random effects, over all
    /// observed slots.
    pub fn log_likelihood(&self, state: &ChainState) -> Result<f64> {
        self.check_state(state)?;
        let mut total = 0.0;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        for k in 0..self.design.n_outcomes() {
            let o = &self.design.outcomes[k];
            let resid = &o.y - self.fitted(state, k);
            let tau = state.tau[k];
            total += 0.5 * o.n_rows() as f64 * (tau.ln() - ln_2pi);
            total -= 0.5 * tau * resid.dot(&resid);
        }
        if !total.is_finite() {
            return Err(Error::linalg("non-finite log-likelihood".to_string()));
        }
        Ok(total)
    }

    /// One full update cycle. With an association present the order is:
    /// full-conditional draws for uninvolved outcomes' fixed effects, the
    /// collapsed (beta_target, alpha) block, the all-RE-marginal draw of the
    /// source coefficients, then random effects, error precisions, and the
    /// RE precision. Each marginalized block's trimmed random effects are
    /// regenerated from their full conditional before any later block reads
    /// them, so the sweep remains an exact (partially collapsed) Gibbs
    /// kernel. Without an association every block is a plain full
    /// conditional.
    pub fn sweep(&self, state: &mut ChainState, rng: &mut ChaCha20Rng) -> Result<()> {
        let target = self.design.target();
        let source = self.design.source();
        for k in 0..self.design.n_outcomes() {
            if target != Some(k) && source != Some(k) {
                self.update_fixed_effects(state, k, rng)?;
            }
        }
        if target.is_some() {
            self.update_target_and_association(state, rng)?;
            self.update_source_marginal(state, rng)?;
        }
        for i in 0..self.design.n_subjects {
            self.update_random_effects(state, i, rng)?;
        }
        self.update_error_precisions(state, rng)?;
        self.update_re_precision(state, rng)?;
        Ok(())
    }

    fn record_row(&self, state: &ChainState) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.param_names.len());
        for beta in &state.beta {
            row.extend(beta.iter().copied());
        }
        if let Some(alpha) = state.alpha {
            row.push(alpha);
        }
        for &tau in &state.tau {
            row.push(1.0 / tau.sqrt());
        }
        if self.design.re.total > 0 {
            let chol = linalg::cholesky_with_jitter(&state.d_inv)?;
            let d = chol.chol.inverse();
            for block in &self.design.re.blocks {
                for i in block.clone() {
                    for j in i..block.end {
                        row.push(d[(i, j)]);
                    }
                }
            }
        }
        debug_assert_eq!(row.len(), self.param_names.len());
        Ok(row)
    }

    /// Run one chain to completion. The retained rows follow the schedule
    /// documented on [`McmcConfig`].
    pub fn run_chain(&self, chain_index: usize) -> Result<ChainDraws> {
        let cfg = &self.spec.mcmc;
        cfg.validate()?;
        let mut rng = chain_rng(cfg.seed, chain_index);
        let mut state = self.initial_state()?;
        let mut draws = Vec::with_capacity(cfg.n_retained());
        let total_sweeps = cfg.adapt + cfg.n_iter;
        for sweep in 0..total_sweeps {
            self.sweep(&mut state, &mut rng).map_err(|e| Error::Numerical {
                iteration: sweep,
                message: e.to_string(),
            })?;
            if sweep >= cfg.adapt {
                let s = sweep - cfg.adapt;
                if s >= cfg.burn_in && (s - cfg.burn_in + 1) % cfg.thin == 0 {
                    draws.push(self.record_row(&state).map_err(|e| Error::Numerical {
                        iteration: sweep,
                        message: e.to_string(),
                    })?);
                }
            }
        }
        Ok(ChainDraws {
            names: self.param_names.clone(),
            draws,
            meta: ChainMeta {
                seed: cfg.seed,
                chain_index,
                config: cfg.clone(),
                jitter_retries: state.jitter_retries,
            },
        })
    }

    /// Run all configured chains; chains are independent and run in
    /// parallel, each on its own RNG stream.
    pub fn run_chains(&self) -> Result<Vec<ChainDraws>> {
        crate::driver::init_thread_pool();
        (0..self.spec.mcmc.n_chains)
            .into_par_iter()
            .map(|c| self.run_chain(c))
            .collect()
    }
}

/// Latent mean of outcome `k` over its observed rows; for the target outcome
/// this includes the alpha-weighted functional term.
pub fn linear_predictor(
    design: &DesignSet,
    spec: &ModelSpec,
    state: &ChainState,
    k: usize,
) -> Result<DVector<f64>> {
    let sampler = GibbsSampler::new(design, spec)?;
    sampler.check_state(state)?;
    Ok(sampler.fitted(state, k))
}
