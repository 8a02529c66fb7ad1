//! Longitudinal dataset containers.
//!
//! Encounters are shared across outcomes: each encounter row carries a time,
//! one slot per outcome (possibly missing), and the covariate values recorded
//! at that encounter. Outcomes observed on different schedules are represented
//! by missing slots.

use crate::error::{Error, Result};

/// Admissible encounter-time range in years.
pub const TIME_RANGE: (f64, f64) = (0.0, 120.0);

/// One subject's encounter history.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Encounter times in years, non-decreasing.
    pub times: Vec<f64>,
    /// K outcome series, each aligned with `times`; `None` marks a missing slot.
    pub outcomes: Vec<Vec<Option<f64>>>,
    /// Covariate values per encounter, aligned with the dataset covariate
    /// names. Time-fixed covariates simply repeat their value.
    pub covariates: Vec<Vec<f64>>,
    /// Stratification label (e.g. state), constant within subject.
    pub group: Option<String>,
}

impl SubjectRecord {
    pub fn n_encounters(&self) -> usize {
        self.times.len()
    }
}

/// Multi-outcome longitudinal dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    pub subjects: Vec<SubjectRecord>,
    pub outcome_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Name of the grouping column the subjects' `group` labels came from.
    pub group_column: Option<String>,
    /// Multiplicative factor applied to each outcome since ingestion
    /// (see [`rescale_outcome`]); 1.0 means untouched.
    pub applied_scales: Vec<f64>,
}

impl LongitudinalDataset {
    pub fn new(
        subjects: Vec<SubjectRecord>,
        outcome_names: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let scales = vec![1.0; outcome_names.len()];
        let ds = LongitudinalDataset {
            subjects,
            outcome_names,
            covariate_names,
            group_column: None,
            applied_scales: scales,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_names.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn outcome_index(&self, name: &str) -> Option<usize> {
        self.outcome_names.iter().position(|n| n == name)
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Times at which outcome `k` is observed, across all subjects.
    pub fn observed_times(&self, k: usize) -> Vec<f64> {
        let mut times = Vec::new();
        for s in &self.subjects {
            for (j, slot) in s.outcomes[k].iter().enumerate() {
                if slot.is_some() {
                    times.push(s.times[j]);
                }
            }
        }
        times
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_outcomes();
        if k == 0 {
            return Err(Error::data("dataset must declare at least one outcome"));
        }
        if self.applied_scales.len() != k {
            return Err(Error::data("applied_scales must match outcome count"));
        }
        for subject in &self.subjects {
            let n = subject.times.len();
            if n == 0 {
                return Err(Error::data(format!(
                    "subject {} has no encounters",
                    subject.id
                )));
            }
            if subject.outcomes.len() != k {
                return Err(Error::data(format!(
                    "subject {} has {} outcome series, expected {k}",
                    subject.id,
                    subject.outcomes.len()
                )));
            }
            let mut prev = f64::NEG_INFINITY;
            for &t in &subject.times {
                if !t.is_finite() || t < TIME_RANGE.0 || t > TIME_RANGE.1 {
                    return Err(Error::data(format!(
                        "subject {} has encounter time {t} outside the admissible range",
                        subject.id
                    )));
                }
                if t < prev {
                    return Err(Error::data(format!(
                        "subject {} has decreasing encounter times",
                        subject.id
                    )));
                }
                prev = t;
            }
            for series in &subject.outcomes {
                if series.len() != n {
                    return Err(Error::data(format!(
                        "subject {}: outcome series length mismatch",
                        subject.id
                    )));
                }
                for slot in series {
                    if let Some(v) = slot {
                        if !v.is_finite() {
                            return Err(Error::data(format!(
                                "subject {} has a non-finite outcome value",
                                subject.id
                            )));
                        }
                    }
                }
            }
            for j in 0..n {
                if (0..k).all(|q| subject.outcomes[q][j].is_none()) {
                    return Err(Error::data(format!(
                        "subject {} encounter {} has every outcome missing",
                        subject.id,
                        j + 1
                    )));
                }
            }
            if subject.covariates.len() != n {
                return Err(Error::data(format!(
                    "subject {}: covariate rows must align with encounters",
                    subject.id
                )));
            }
            for row in &subject.covariates {
                if row.len() != self.covariate_names.len() {
                    return Err(Error::data(format!(
                        "subject {}: covariate row width mismatch",
                        subject.id
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::data(format!(
                        "subject {} has a non-finite covariate value",
                        subject.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Multiply one outcome's observed values by `factor`, recording the factor
/// on the dataset so reports can label the unit change.
pub fn rescale_outcome(
    data: &LongitudinalDataset,
    outcome: usize,
    factor: f64,
) -> Result<LongitudinalDataset> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::data(format!(
            "rescaling factor must be positive and finite, got {factor}"
        )));
    }
    if outcome >= data.n_outcomes() {
        return Err(Error::data(format!("no outcome with index {outcome}")));
    }
    let mut out = data.clone();
    for subject in &mut out.subjects {
        for slot in &mut subject.outcomes[outcome] {
            if let Some(v) = slot {
                *v *= factor;
            }
        }
    }
    out.applied_scales[outcome] *= factor;
    Ok(out)
}
