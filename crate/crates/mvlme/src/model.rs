//! Model specification: per-outcome design choices, the association
//! structure linking two outcomes, priors, and the MCMC schedule.

use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};

/// Functional transformation of the source outcome's latent trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Value,
    Slope,
    Auc,
}

/// How the linked outcomes are associated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationKind {
    /// No association parameter; outcomes connect only through shared
    /// (cross-outcome correlated) random effects.
    None,
    Value,
    Slope,
    Auc,
}

impl AssociationKind {
    pub fn functional(self) -> Option<FunctionalKind> {
        match self {
            AssociationKind::None => None,
            AssociationKind::Value => Some(FunctionalKind::Value),
            AssociationKind::Slope => Some(FunctionalKind::Slope),
            AssociationKind::Auc => Some(FunctionalKind::Auc),
        }
    }
}

/// Normalizer for the area-under-the-curve functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the evaluation time t (the displayed-model convention),
    /// also for windowed integrals.
    #[default]
    OneOverT,
    /// Divide by the effective window length t - max(0, t - d).
    OneOverWindow,
}

/// Association term configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationStructure {
    pub kind: AssociationKind,
    /// Index q of the outcome whose latent trajectory is transformed.
    pub source: usize,
    /// Index of the outcome receiving the association term.
    pub target: usize,
    /// Cumulative-exposure window in years; absent means full history from 0.
    pub window_d: Option<f64>,
    pub normalize_by: Normalization,
}

impl AssociationStructure {
    pub fn none() -> Self {
        AssociationStructure {
            kind: AssociationKind::None,
            source: 1,
            target: 0,
            window_d: None,
            normalize_by: Normalization::OneOverT,
        }
    }

    pub fn has_alpha(&self) -> bool {
        self.kind != AssociationKind::None
    }

    pub fn validate(&self, n_outcomes: usize) -> Result<()> {
        if self.kind == AssociationKind::None {
            return Ok(());
        }
        if self.source >= n_outcomes || self.target >= n_outcomes {
            return Err(Error::config("association outcome index out of range"));
        }
        if self.source == self.target {
            return Err(Error::config(
                "association source and target must be different outcomes",
            ));
        }
        if let Some(d) = self.window_d {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::config(format!(
                    "association window must be a positive duration, got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Design choices for one outcome's submodel. The fixed design is
/// [intercept, spline columns, covariates]; random effects attach to the
/// intercept and/or spline columns (a subset of the fixed design).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    /// Covariate column names (already numeric/indicator-encoded).
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Natural-spline degrees of freedom for the time trend; 0 disables the
    /// spline columns.
    #[serde(default)]
    pub spline_df: usize,
    #[serde(default = "default_true")]
    pub random_intercept: bool,
    #[serde(default = "default_true")]
    pub random_spline: bool,
}

fn default_true() -> bool {
    true
}

impl OutcomeSpec {
    pub fn new(name: impl Into<String>) -> Self {
        OutcomeSpec {
            name: name.into(),
            covariates: Vec::new(),
            spline_df: 2,
            random_intercept: true,
            random_spline: true,
        }
    }

    /// Number of fixed-effect columns.
    pub fn n_fixed(&self) -> usize {
        1 + self.spline_df + self.covariates.len()
    }

    /// Number of random-effect columns.
    pub fn n_random(&self) -> usize {
        usize::from(self.random_intercept) + if self.random_spline { self.spline_df } else { 0 }
    }
}

/// Prior hyperparameters (shape/rate Gamma convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub beta_prior_variance: f64,
    pub alpha_prior_variance: f64,
    pub error_precision_shape: f64,
    pub error_precision_rate: f64,
    /// Wishart degrees of freedom = number of random effects + this offset.
    pub wishart_df_offset: usize,
    pub scale_hyper_shape: f64,
    pub scale_hyper_rate: f64,
    pub scale_hyper_multiplier: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            beta_prior_variance: 100.0,
            alpha_prior_variance: 100.0,
            error_precision_shape: 0.01,
            error_precision_rate: 0.01,
            wishart_df_offset: 1,
            scale_hyper_shape: 0.5,
            scale_hyper_rate: 0.01,
            scale_hyper_multiplier: 4.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("beta_prior_variance", self.beta_prior_variance),
            ("alpha_prior_variance", self.alpha_prior_variance),
            ("error_precision_shape", self.error_precision_shape),
            ("error_precision_rate", self.error_precision_rate),
            ("scale_hyper_shape", self.scale_hyper_shape),
            ("scale_hyper_rate", self.scale_hyper_rate),
            ("scale_hyper_multiplier", self.scale_hyper_multiplier),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// MCMC schedule. A run executes `adapt + n_iter` sweeps; the `adapt`
/// warm-up sweeps are always discarded, then `burn_in` of the remaining
/// `n_iter` are dropped and every `thin`-th draw after that is retained,
/// giving floor((n_iter - burn_in) / thin) retained draws per chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub adapt: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_chains: 2,
            n_iter: 28_000,
            burn_in: 3_000,
            thin: 50,
            adapt: 3_000,
            seed: 1,
        }
    }
}

impl McmcConfig {
    /// The full published schedule (also the default).
    pub fn full_schedule(seed: u64) -> Self {
        McmcConfig {
            seed,
            ..McmcConfig::default()
        }
    }

    /// Shortened schedule for simulation harnesses and CI.
    pub fn desk_scale(seed: u64) -> Self {
        McmcConfig {
            n_chains: 2,
            n_iter: 6_000,
            burn_in: 1_000,
            thin: 10,
            adapt: 1_000,
            seed,
        }
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::config("n_chains must be at least 1"));
        }
        if self.thin < 1 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.burn_in + self.adapt >= self.n_iter {
            return Err(Error::config(
                "burn_in + adapt must be smaller than n_iter",
            ));
        }
        Ok(())
    }
}

/// Complete model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub outcomes: Vec<OutcomeSpec>,
    pub association: AssociationStructure,
    /// When false, the random-effect covariance is block-diagonal across
    /// outcomes (no cross-outcome correlation).
    pub re_cross_outcome_correlation: bool,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

impl ModelSpec {
    pub fn validate(&self, data: &LongitudinalDataset) -> Result<()> {
        if self.outcomes.len() != data.n_outcomes() {
            return Err(Error::config(format!(
                "spec has {} outcomes but data has {}",
                self.outcomes.len(),
                data.n_outcomes()
            )));
        }
        for (spec, name) in self.outcomes.iter().zip(&data.outcome_names) {
            if &spec.name != name {
                return Err(Error::config(format!(
                    "outcome order mismatch: spec '{}' vs data '{}'",
                    spec.name, name
                )));
            }
            for cov in &spec.covariates {
                if data.covariate_index(cov).is_none() {
                    return Err(Error::config(format!(
                        "unknown covariate '{cov}' for outcome '{}'",
                        spec.name
                    )));
                }
            }
            if spec.random_spline && !spec.random_intercept && spec.spline_df == 0 {
                return Err(Error::config(format!(
                    "outcome '{}' declares random spline terms without spline columns",
                    spec.name
                )));
            }
        }
        self.association.validate(self.outcomes.len())?;
        self.priors.validate()?;
        self.mcmc.validate()?;
        Ok(())
    }

    /// Total number of random-effect components across outcomes.
    pub fn n_random_effects(&self) -> usize {
        self.outcomes.iter().map(OutcomeSpec::n_random).sum()
    }
}
