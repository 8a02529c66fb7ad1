//! Design assembly: fixed, random, and functional design matrices for every
//! outcome, precomputed once so that all sampler conditionals stay
//! linear-Gaussian.

use nalgebra::{DMatrix, DVector};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::functional::{
    functional_rows, functional_rows_with_covariate_integrals, FunctionalQuery,
};
use crate::model::{AssociationStructure, FunctionalKind, ModelSpec, OutcomeSpec};
use crate::spline::{make_knots, KnotSet, NaturalSpline};

/// Position of one observed outcome slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsRow {
    pub subject: usize,
    pub encounter: usize,
    pub time: f64,
}

/// Design matrices for one outcome, rows restricted to observed slots and
/// ordered by (subject, encounter).
#[derive(Debug, Clone)]
pub struct OutcomeDesign {
    pub rows: Vec<ObsRow>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Row indices grouped by subject (empty for subjects without
    /// observations of this outcome).
    pub subject_rows: Vec<Vec<usize>>,
}

impl OutcomeDesign {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Functional design rows aligned with the target outcome's rows: the
/// association covariate equals `f_x . beta_q + f_z . b_iq`.
#[derive(Debug, Clone)]
pub struct FunctionalDesign {
    pub f_x: DMatrix<f64>,
    pub f_z: DMatrix<f64>,
}

/// Layout of the stacked per-subject random-effect vector.
#[derive(Debug, Clone)]
pub struct ReLayout {
    pub component_names: Vec<String>,
    /// Start of each outcome's block in the stacked vector.
    pub offsets: Vec<usize>,
    pub dims: Vec<usize>,
    /// Wishart update blocks: one covering everything when cross-outcome
    /// correlation is on, otherwise one per outcome with random effects.
    pub blocks: Vec<std::ops::Range<usize>>,
    pub total: usize,
}

impl ReLayout {
    pub fn build(spec: &ModelSpec) -> Self {
        let mut component_names = Vec::new();
        let mut offsets = Vec::with_capacity(spec.outcomes.len());
        let mut dims = Vec::with_capacity(spec.outcomes.len());
        let mut offset = 0usize;
        for outcome in &spec.outcomes {
            offsets.push(offset);
            let dim = outcome.n_random();
            dims.push(dim);
            if outcome.random_intercept {
                component_names.push(format!("{}_intercept", outcome.name));
            }
            if outcome.random_spline {
                for j in 1..=outcome.spline_df {
                    component_names.push(format!("{}_ns{j}", outcome.name));
                }
            }
            offset += dim;
        }
        let total = offset;
        let blocks = if spec.re_cross_outcome_correlation {
            if total > 0 {
                vec![0..total]
            } else {
                Vec::new()
            }
        } else {
            offsets
                .iter()
                .zip(&dims)
                .filter(|(_, &d)| d > 0)
                .map(|(&o, &d)| o..o + d)
                .collect()
        };
        ReLayout {
            component_names,
            offsets,
            dims,
            blocks,
            total,
        }
    }

    pub fn outcome_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.dims[k]
    }
}

/// Everything the sampler needs, precomputed from data and spec.
#[derive(Debug, Clone)]
pub struct DesignSet {
    pub outcome_specs: Vec<OutcomeSpec>,
    pub association: AssociationStructure,
    pub knots: Vec<Option<KnotSet>>,
    pub bases: Vec<Option<NaturalSpline>>,
    pub outcomes: Vec<OutcomeDesign>,
    /// Present exactly when the association has a functional term; rows align
    /// with the target outcome's rows.
    pub functional: Option<FunctionalDesign>,
    pub re: ReLayout,
    pub n_subjects: usize,
    /// Fixed-effect column names per outcome.
    pub fixed_names: Vec<Vec<String>>,
}

impl DesignSet {
    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn target(&self) -> Option<usize> {
        self.association.has_alpha().then_some(self.association.target)
    }

    pub fn source(&self) -> Option<usize> {
        self.association.has_alpha().then_some(self.association.source)
    }
}

pub fn fixed_column_names(outcome: &OutcomeSpec) -> Vec<String> {
    let mut names = Vec::with_capacity(outcome.n_fixed());
    names.push("intercept".to_string());
    for j in 1..=outcome.spline_df {
        names.push(format!("ns{j}"));
    }
    names.extend(outcome.covariates.iter().cloned());
    names
}

/// Integral over [lo, hi] of the step function holding `values[i]` on
/// [times[i], times[i+1]) and extended constantly on both sides.
fn step_integral(times: &[f64], values: &[f64], lo: f64, hi: f64) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    debug_assert!(!times.is_empty());
    let mut acc = 0.0;
    let mut seg_start = lo;
    let mut current = values[0];
    for (i, &tk) in times.iter().enumerate() {
        if tk <= lo {
            current = values[i];
            continue;
        }
        if tk >= hi {
            break;
        }
        acc += current * (tk - seg_start);
        seg_start = tk;
        current = values[i];
    }
    acc + current * (hi - seg_start)
}

/// Assemble every design structure for the model.
pub fn build_design(data: &LongitudinalDataset, spec: &ModelSpec) -> Result<DesignSet> {
    spec.validate(data)?;

    // Covariate index lookup per outcome.
    let cov_indices: Vec<Vec<usize>> = spec
        .outcomes
        .iter()
        .map(|o| {
            o.covariates
                .iter()
                .map(|name| data.covariate_index(name).expect("validated above"))
                .collect()
        })
        .collect();

    // Knots from each outcome's observed times.
    let mut knots: Vec<Option<KnotSet>> = Vec::with_capacity(spec.outcomes.len());
    let mut bases: Vec<Option<NaturalSpline>> = Vec::with_capacity(spec.outcomes.len());
    for (k, outcome) in spec.outcomes.iter().enumerate() {
        let times = data.observed_times(k);
        if times.is_empty() {
            return Err(Error::data(format!(
                "outcome '{}' has no observed values",
                outcome.name
            )));
        }
        if outcome.spline_df >= 1 {
            let ks = make_knots(&times, outcome.spline_df, None)?;
            bases.push(Some(NaturalSpline::new(ks.clone())));
            knots.push(Some(ks));
        } else {
            knots.push(None);
            bases.push(None);
        }
    }

    // Per-outcome design rows over observed slots.
    let mut outcomes = Vec::with_capacity(spec.outcomes.len());
    for (k, outcome) in spec.outcomes.iter().enumerate() {
        let mut rows = Vec::new();
        let mut x_rows: Vec<Vec<f64>> = Vec::new();
        let mut z_rows: Vec<Vec<f64>> = Vec::new();
        let mut y_vals: Vec<f64> = Vec::new();
        let mut subject_rows: Vec<Vec<usize>> = vec![Vec::new(); data.n_subjects()];
        for (s, subject) in data.subjects.iter().enumerate() {
            for (j, slot) in subject.outcomes[k].iter().enumerate() {
                let Some(y) = slot else { continue };
                let t = subject.times[j];
                let cov_row: Vec<f64> = cov_indices[k]
                    .iter()
                    .map(|&c| subject.covariates[j][c])
                    .collect();
                let query = FunctionalQuery {
                    kind: FunctionalKind::Value,
                    t,
                    window_d: None,
                    normalize_by: spec.association.normalize_by,
                };
                let (x_row, z_row) =
                    functional_rows(&query, outcome, bases[k].as_ref(), &cov_row)?;
                subject_rows[s].push(rows.len());
                rows.push(ObsRow {
                    subject: s,
                    encounter: j,
                    time: t,
                });
                x_rows.push(x_row);
                z_rows.push(z_row);
                y_vals.push(*y);
            }
        }
        let n = rows.len();
        let p = outcome.n_fixed();
        let r = outcome.n_random();
        let x = DMatrix::from_row_iterator(n, p, x_rows.into_iter().flatten());
        let z = DMatrix::from_row_iterator(n, r, z_rows.into_iter().flatten());
        let y = DVector::from_vec(y_vals);
        if x.iter().any(|v| !v.is_finite()) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite design entry for outcome '{}'",
                outcome.name
            )));
        }
        outcomes.push(OutcomeDesign {
            rows,
            x,
            z,
            y,
            subject_rows,
        });
    }

    // Functional design rows for the association term.
    let functional = if let Some(kind) = spec.association.kind.functional() {
        let q = spec.association.source;
        let target = spec.association.target;
        let source_spec = &spec.outcomes[q];
        let source_basis = bases[q].as_ref();
        let n_t = outcomes[target].n_rows();
        let mut fx_rows: Vec<Vec<f64>> = Vec::with_capacity(n_t);
        let mut fz_rows: Vec<Vec<f64>> = Vec::with_capacity(n_t);
        for row in &outcomes[target].rows {
            let subject = &data.subjects[row.subject];
            let t = row.time;
            let cov_row: Vec<f64> = cov_indices[q]
                .iter()
                .map(|&c| subject.covariates[row.encounter][c])
                .collect();
            let query = FunctionalQuery {
                kind,
                t,
                window_d: spec.association.window_d,
                normalize_by: spec.association.normalize_by,
            };
            let (fx, fz) = if kind == FunctionalKind::Auc && t > crate::functional::SMALL_TIME {
                // Time-varying covariates integrate as observed step
                // histories; time-fixed ones reduce to value * length.
                let (lo, hi) = crate::functional::auc_window(t, spec.association.window_d);
                let integrals: Vec<f64> = cov_indices[q]
                    .iter()
                    .map(|&c| {
                        let series: Vec<f64> =
                            subject.covariates.iter().map(|r| r[c]).collect();
                        step_integral(&subject.times, &series, lo, hi)
                    })
                    .collect();
                functional_rows_with_covariate_integrals(
                    &query,
                    source_spec,
                    source_basis,
                    &cov_row,
                    Some(&integrals),
                )?
            } else {
                functional_rows(&query, source_spec, source_basis, &cov_row)?
            };
            fx_rows.push(fx);
            fz_rows.push(fz);
        }
        let f_x = DMatrix::from_row_iterator(
            n_t,
            source_spec.n_fixed(),
            fx_rows.into_iter().flatten(),
        );
        let f_z = DMatrix::from_row_iterator(
            n_t,
            source_spec.n_random(),
            fz_rows.into_iter().flatten(),
        );
        if f_x.iter().any(|v| !v.is_finite()) || f_z.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite functional design entry".to_string()));
        }
        Some(FunctionalDesign { f_x, f_z })
    } else {
        None
    };

    Ok(DesignSet {
        outcome_specs: spec.outcomes.clone(),
        association: spec.association.clone(),
        knots,
        bases,
        outcomes,
        functional,
        re: ReLayout::build(spec),
        n_subjects: data.n_subjects(),
        fixed_names: spec.outcomes.iter().map(fixed_column_names).collect(),
    })
}
