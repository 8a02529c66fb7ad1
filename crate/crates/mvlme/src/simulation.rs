//! Synthetic-cohort generator and sensitivity-analysis harness.
//!
//! Data are generated from a two-outcome model in which an association
//! parameter links the second outcome's latent trajectory (value, slope, or
//! normalized AUC) into the first outcome's mean. The harness then fits the
//! three candidate linkages (association parameter only, correlated random
//! effects only, or both) to the same replicates and tabulates bias and
//! interval coverage per parameter.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{LongitudinalDataset, SubjectRecord};
use crate::design::build_design;
use crate::diagnostics::{summarize, PosteriorSummary, SummaryOptions};
use crate::error::{Error, Result};
use crate::functional::{functional_rows, FunctionalQuery};
use crate::mcmc::GibbsSampler;
use crate::model::{
    AssociationKind, AssociationStructure, FunctionalKind, McmcConfig, ModelSpec, Normalization,
    OutcomeSpec, PriorConfig,
};
use crate::spline::{KnotSet, NaturalSpline};

/// Generator for one time-fixed covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateGenerator {
    Bernoulli(f64),
    Normal { mean: f64, sd: f64 },
}

/// Ground-truth configuration for one simulated cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationScenario {
    pub n_subjects: usize,
    /// Per-subject encounter count, uniform on this inclusive range.
    pub encounters: (usize, usize),
    /// Encounter times are uniform on this range, then sorted.
    pub time_range: (f64, f64),
    pub true_kind: FunctionalKind,
    /// Outcome-1 fixed effects: intercept, time, covariate.
    pub beta1: Vec<f64>,
    /// Outcome-2 fixed effects: intercept, time.
    pub beta2: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha: f64,
    /// Diagonal of the random-effect covariance, ordered
    /// (y1 intercept, y1 time, y2 intercept, y2 time).
    pub d_diag: Vec<f64>,
    pub covariate: CovariateGenerator,
    pub seed: u64,
}

impl SimulationScenario {
    /// Desk-scale defaults sized to mimic lung-function-percent and
    /// deprivation-index scales.
    pub fn defaults(kind: FunctionalKind, seed: u64) -> Self {
        SimulationScenario {
            n_subjects: 200,
            encounters: (4, 12),
            time_range: (6.0, 20.0),
            true_kind: kind,
            beta1: vec![80.0, -5.0, 2.0],
            beta2: vec![0.5, 0.1],
            sigma1: 5.0,
            sigma2: 0.05,
            alpha: -10.0,
            d_diag: vec![25.0, 1.0, 0.01, 0.0025],
            covariate: CovariateGenerator::Bernoulli(0.5),
            seed,
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self.true_kind {
            FunctionalKind::Value => "value",
            FunctionalKind::Slope => "slope",
            FunctionalKind::Auc => "auc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::config("scenario needs at least 2 subjects"));
        }
        if self.encounters.0 < 1 || self.encounters.0 > self.encounters.1 {
            return Err(Error::config("invalid encounter count range"));
        }
        if !(self.time_range.0 >= 0.0 && self.time_range.1 > self.time_range.0) {
            return Err(Error::config("invalid time range"));
        }
        if self.beta1.len() != 3 || self.beta2.len() != 2 {
            return Err(Error::config(
                "scenario expects 3 outcome-1 and 2 outcome-2 fixed effects",
            ));
        }
        // Zero variances are allowed so noise-free forward checks can run;
        // fitted scenarios should keep them positive.
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 {
            return Err(Error::config("noise standard deviations must be >= 0"));
        }
        if self.d_diag.len() != 4 || self.d_diag.iter().any(|v| *v < 0.0) {
            return Err(Error::config("d_diag must hold 4 non-negative variances"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("alpha must be finite"));
        }
        Ok(())
    }

    /// Truth values keyed by the sampler's parameter names.
    pub fn truth(&self) -> TruthRecord {
        let mut values = vec![
            ("beta_y1_intercept".to_string(), self.beta1[0]),
            ("beta_y1_ns1".to_string(), self.beta1[1]),
            ("beta_y1_w".to_string(), self.beta1[2]),
            ("beta_y2_intercept".to_string(), self.beta2[0]),
            ("beta_y2_ns1".to_string(), self.beta2[1]),
            ("sigma_y1".to_string(), self.sigma1),
            ("sigma_y2".to_string(), self.sigma2),
            ("alpha".to_string(), self.alpha),
            ("re_var_y1_intercept".to_string(), self.d_diag[0]),
            ("re_var_y1_ns1".to_string(), self.d_diag[1]),
            ("re_var_y2_intercept".to_string(), self.d_diag[2]),
            ("re_var_y2_ns1".to_string(), self.d_diag[3]),
        ];
        values.sort_by(|a, b| a.0.cmp(&b.0));
        TruthRecord { values }
    }

    fn source_spec(&self) -> OutcomeSpec {
        OutcomeSpec {
            name: "y2".into(),
            covariates: vec![],
            spline_df: 1,
            random_intercept: true,
            random_spline: true,
        }
    }
}

/// Truth values by parameter name.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub values: Vec<(String, f64)>,
}

impl TruthRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// How the fitted model connects the two outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Association parameter with independent (block-diagonal) random effects.
    AssocOnly,
    /// No association parameter; cross-outcome correlated random effects.
    ReOnly,
    /// Association parameter plus correlated random effects.
    AssocAndRe,
}

/// One fitted model structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitStructure {
    pub linkage: Linkage,
    pub kind: FunctionalKind,
}

impl FitStructure {
    pub fn label(&self) -> String {
        let kind = match self.kind {
            FunctionalKind::Value => "value",
            FunctionalKind::Slope => "slope",
            FunctionalKind::Auc => "auc",
        };
        match self.linkage {
            Linkage::AssocOnly => kind.to_string(),
            Linkage::ReOnly => "re_only".to_string(),
            Linkage::AssocAndRe => format!("{kind}_and_re"),
        }
    }

    pub fn has_alpha(&self) -> bool {
        self.linkage != Linkage::ReOnly
    }

    /// The three structures fitted against one true kind.
    pub fn crossing(kind: FunctionalKind) -> Vec<FitStructure> {
        vec![
            FitStructure {
                linkage: Linkage::AssocOnly,
                kind,
            },
            FitStructure {
                linkage: Linkage::ReOnly,
                kind,
            },
            FitStructure {
                linkage: Linkage::AssocAndRe,
                kind,
            },
        ]
    }
}

/// Model specification matching the generator's design for one structure.
pub fn model_spec_for(structure: FitStructure, mcmc: McmcConfig) -> ModelSpec {
    let association = match structure.linkage {
        Linkage::ReOnly => AssociationStructure::none(),
        _ => AssociationStructure {
            kind: match structure.kind {
                FunctionalKind::Value => AssociationKind::Value,
                FunctionalKind::Slope => AssociationKind::Slope,
                FunctionalKind::Auc => AssociationKind::Auc,
            },
            source: 1,
            target: 0,
            window_d: None,
            normalize_by: Normalization::OneOverT,
        },
    };
    ModelSpec {
        outcomes: vec![
            OutcomeSpec {
                name: "y1".into(),
                covariates: vec!["w".into()],
                spline_df: 1,
                random_intercept: true,
                random_spline: true,
            },
            OutcomeSpec {
                name: "y2".into(),
                covariates: vec![],
                spline_df: 1,
                random_intercept: true,
                random_spline: true,
            },
        ],
        association,
        re_cross_outcome_correlation: structure.linkage != Linkage::AssocOnly,
        priors: PriorConfig::default(),
        mcmc,
    }
}

/// Deterministic RNG for one replicate's data.
fn replicate_rng(seed: u64, replicate: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1_000 + replicate);
    rng
}

/// Simulate one cohort. The draw order per subject is fixed (encounter
/// count, times, covariate, random effects, outcome-2 noise, outcome-1
/// noise) so parameter changes that do not consume draws, like alpha, leave
/// the noise stream untouched.
pub fn generate_dataset(
    scenario: &SimulationScenario,
    replicate: u64,
) -> Result<(LongitudinalDataset, TruthRecord)> {
    scenario.validate()?;
    let mut rng = replicate_rng(scenario.seed, replicate);
    let basis = NaturalSpline::new(KnotSet::new(
        scenario.time_range.0,
        scenario.time_range.1,
        vec![],
        1,
    )?);
    let source = scenario.source_spec();
    let beta2 = DVector::from_vec(scenario.beta2.clone());
    let re_sd: Vec<f64> = scenario.d_diag.iter().map(|v| v.sqrt()).collect();

    let mut subjects = Vec::with_capacity(scenario.n_subjects);
    for i in 0..scenario.n_subjects {
        let n_enc = rng.random_range(scenario.encounters.0..=scenario.encounters.1);
        let mut times: Vec<f64> = (0..n_enc)
            .map(|_| rng.random_range(scenario.time_range.0..scenario.time_range.1))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let w = match scenario.covariate {
            CovariateGenerator::Bernoulli(p) => {
                if rng.random_range(0.0..1.0) < p {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateGenerator::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + sd * z
            }
        };
        let b: Vec<f64> = re_sd
            .iter()
            .map(|sd| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        let b2 = DVector::from_row_slice(&b[2..4]);

        let mut y2 = Vec::with_capacity(n_enc);
        for &t in &times {
            let m2 = scenario.beta2[0] + scenario.beta2[1] * t + b[2] + b[3] * t;
            let z: f64 = StandardNormal.sample(&mut rng);
            y2.push(Some(m2 + scenario.sigma2 * z));
        }
        let mut y1 = Vec::with_capacity(n_enc);
        for &t in &times {
            let query = FunctionalQuery {
                kind: scenario.true_kind,
                t,
                window_d: None,
                normalize_by: Normalization::OneOverT,
            };
            let (fx, fz) = functional_rows(&query, &source, Some(&basis), &[])?;
            let functional =
                DVector::from_vec(fx).dot(&beta2) + DVector::from_vec(fz).dot(&b2);
            let m1 = scenario.beta1[0] + scenario.beta1[1] * t + scenario.beta1[2] * w + b[0]
                + b[1] * t;
            let z: f64 = StandardNormal.sample(&mut rng);
            y1.push(Some(m1 + scenario.alpha * functional + scenario.sigma1 * z));
        }

        subjects.push(SubjectRecord {
            id: format!("s{i:05}"),
            times: times.clone(),
            outcomes: vec![y1, y2],
            covariates: times.iter().map(|_| vec![w]).collect(),
            group: None,
        });
    }
    let data = LongitudinalDataset::new(
        subjects,
        vec!["y1".into(), "y2".into()],
        vec!["w".into()],
    )?;
    Ok((data, scenario.truth()))
}

/// Fit one structure to one dataset and summarize.
pub fn fit_structure(
    data: &LongitudinalDataset,
    structure: FitStructure,
    mcmc: McmcConfig,
) -> Result<PosteriorSummary> {
    let spec = model_spec_for(structure, mcmc);
    let design = build_design(data, &spec)?;
    let sampler = GibbsSampler::new(&design, &spec)?;
    let chains = sampler.run_chains()?;
    summarize(&chains, &SummaryOptions::default())
}

/// Fit several structures to the same dataset; errors are reported per
/// structure with its label attached.
pub fn fit_structures(
    data: &LongitudinalDataset,
    structures: &[FitStructure],
    mcmc: &McmcConfig,
) -> Vec<(String, Result<PosteriorSummary>)> {
    structures
        .iter()
        .map(|s| (s.label(), fit_structure(data, *s, mcmc.clone())))
        .collect()
}

/// One parameter row of one replicate fit.
#[derive(Debug, Clone)]
pub struct ReplicateRow {
    pub scenario: String,
    pub structure: String,
    pub replicate: u64,
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub bayes_p: f64,
    pub truth: Option<f64>,
}

/// Aggregated bias/coverage for one (scenario, structure, parameter) cell.
#[derive(Debug, Clone)]
pub struct BiasCell {
    pub scenario: String,
    pub structure: String,
    pub parameter: String,
    pub truth: f64,
    /// Average of posterior means over successful replicates.
    pub mean_posterior_mean: f64,
    /// mean_posterior_mean - truth.
    pub bias: f64,
    /// Mean absolute deviation of posterior means from truth.
    pub mean_abs_error: f64,
    /// Share of replicates whose central 95% interval covers the truth.
    pub coverage95: f64,
    pub n_ok: usize,
}

/// A failed replicate fit, recorded without aborting the run.
#[derive(Debug, Clone)]
pub struct FailureRecord {
    pub scenario: String,
    pub structure: String,
    pub replicate: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BiasTable {
    pub replicates: usize,
    pub cells: Vec<BiasCell>,
    pub failures: Vec<FailureRecord>,
}

/// Output of [`run_sensitivity`]: the aggregated table plus raw per-replicate
/// summaries.
#[derive(Debug, Clone)]
pub struct SensitivityOutput {
    pub bias: BiasTable,
    pub replicate_rows: Vec<ReplicateRow>,
}

/// Full sensitivity study: for every scenario, fit the three candidate
/// structures (with the scenario's true functional kind) on `replicates`
/// independent cohorts. Replicate data seeds derive from the scenario seed
/// and sampler seeds from the template seed plus the replicate index, so the
/// whole table is reproducible. Failures flag their cell and the run
/// continues.
pub fn run_sensitivity(
    scenarios: &[SimulationScenario],
    replicates: usize,
    mcmc: &McmcConfig,
) -> Result<SensitivityOutput> {
    if replicates < 1 {
        return Err(Error::config("replicates must be at least 1"));
    }
    crate::driver::init_thread_pool();

    struct Job {
        scenario_idx: usize,
        replicate: u64,
    }
    let jobs: Vec<Job> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, _)| {
            (0..replicates as u64).map(move |r| Job {
                scenario_idx: s,
                replicate: r,
            })
        })
        .collect();

    type JobOutcome = Vec<(String, u64, String, std::result::Result<PosteriorSummary, String>)>;
    let results: Vec<Result<JobOutcome>> = jobs
        .par_iter()
        .map(|job| {
            let scenario = &scenarios[job.scenario_idx];
            let (data, _) = generate_dataset(scenario, job.replicate)?;
            let structures = FitStructure::crossing(scenario.true_kind);
            let mut out = Vec::with_capacity(structures.len());
            for structure in structures {
                let mut cfg = mcmc.clone();
                cfg.seed = mcmc.seed.wrapping_add(job.replicate);
                let fit = fit_structure(&data, structure, cfg).map_err(|e| e.to_string());
                out.push((
                    scenario.kind_label().to_string(),
                    job.replicate,
                    structure.label(),
                    fit,
                ));
            }
            Ok(out)
        })
        .collect();

    let mut replicate_rows = Vec::new();
    let mut failures = Vec::new();
    // (scenario, structure, parameter) -> (truth, means, covered)
    let mut cells: std::collections::BTreeMap<(String, String, String), (f64, Vec<f64>, usize)> =
        std::collections::BTreeMap::new();

    for (job, result) in jobs.iter().zip(results) {
        let scenario = &scenarios[job.scenario_idx];
        let truth = scenario.truth();
        for (scenario_label, replicate, structure_label, fit) in result? {
            match fit {
                Err(message) => failures.push(FailureRecord {
                    scenario: scenario_label,
                    structure: structure_label,
                    replicate,
                    message,
                }),
                Ok(summary) => {
                    for p in &summary.params {
                        let t = truth.get(&p.name);
                        replicate_rows.push(ReplicateRow {
                            scenario: scenario_label.clone(),
                            structure: structure_label.clone(),
                            replicate,
                            parameter: p.name.clone(),
                            mean: p.mean,
                            sd: p.sd,
                            q025: p.q025,
                            q975: p.q975,
                            rhat: p.rhat,
                            ess: p.ess,
                            bayes_p: p.bayes_p,
                            truth: t,
                        });
                        if let Some(t) = t {
                            let entry = cells
                                .entry((
                                    scenario_label.clone(),
                                    structure_label.clone(),
                                    p.name.clone(),
                                ))
                                .or_insert((t, Vec::new(), 0));
                            entry.1.push(p.mean);
                            if p.q025 <= t && t <= p.q975 {
                                entry.2 += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    let cells = cells
        .into_iter()
        .map(|((scenario, structure, parameter), (truth, means, covered))| {
            let n_ok = means.len();
            let mean_pm = means.iter().sum::<f64>() / n_ok.max(1) as f64;
            let mae = means.iter().map(|m| (m - truth).abs()).sum::<f64>() / n_ok.max(1) as f64;
            BiasCell {
                scenario,
                structure,
                parameter,
                truth,
                mean_posterior_mean: mean_pm,
                bias: mean_pm - truth,
                mean_abs_error: mae,
                coverage95: covered as f64 / n_ok.max(1) as f64,
                n_ok,
            }
        })
        .collect();

    Ok(SensitivityOutput {
        bias: BiasTable {
            replicates,
            cells,
            failures,
        },
        replicate_rows,
    })
}
