//! TOML run configuration: data schema, outcome specs, association block,
//! priors, and MCMC settings. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AssociationKind, AssociationStructure, McmcConfig, ModelSpec, Normalization, OutcomeSpec,
    PriorConfig,
};

/// Columns expected in the data CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub id_column: String,
    pub time_column: String,
    pub group_column: Option<String>,
    pub numeric_covariates: Vec<String>,
    /// Categorical covariates with their declared level sets; each expands to
    /// indicator columns `name:level` for every level after the first
    /// (reference) level.
    pub categorical: BTreeMap<String, Vec<String>>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            id_column: "id".to_string(),
            time_column: "time".to_string(),
            group_column: None,
            numeric_covariates: Vec::new(),
            categorical: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSection {
    pub name: String,
    #[serde(default)]
    pub covariates: Vec<String>,
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssociationSection {
    pub kind: AssociationKind,
    pub source: Option<String>,
    pub target: Option<String>,
    pub window_d: Option<f64>,
    pub normalize_by: Normalization,
}

impl Default for AssociationSection {
    fn default() -> Self {
        AssociationSection {
            kind: AssociationKind::None,
            source: None,
            target: None,
            window_d: None,
            normalize_by: Normalization::OneOverT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RandomEffectsSection {
    /// Default: correlated when there is no association parameter,
    /// block-diagonal otherwise.
    pub cross_outcome_correlation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Reporting unit for the association parameter: the group report also
    /// states the effect per `scale_report` units of the source outcome.
    pub scale_report: f64,
    /// Minimum subjects per group in stratified fits.
    pub min_n: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scale_report: 0.1,
            min_n: 120,
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub data: DataSection,
    #[serde(rename = "outcome")]
    pub outcomes: Vec<OutcomeSection>,
    #[serde(default)]
    pub association: AssociationSection,
    #[serde(default)]
    pub random_effects: RandomEffectsSection,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub run: RunSection,
}

/// Column schema handed to the CSV loader.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSchema {
    pub id_column: String,
    pub time_column: String,
    pub group_column: Option<String>,
    pub outcome_columns: Vec<String>,
    pub numeric_covariates: Vec<String>,
    pub categorical: Vec<(String, Vec<String>)>,
}

impl DataSchema {
    /// All covariate column names after indicator expansion, in the order the
    /// loader produces them.
    pub fn expanded_covariates(&self) -> Vec<String> {
        let mut names = self.numeric_covariates.clone();
        for (name, levels) in &self.categorical {
            for level in levels.iter().skip(1) {
                names.push(format!("{name}:{level}"));
            }
        }
        names
    }

    /// Schema describing a dataset that has already been expanded (all
    /// covariates numeric), as produced by the CSV writer.
    pub fn as_expanded(&self) -> DataSchema {
        DataSchema {
            id_column: self.id_column.clone(),
            time_column: self.time_column.clone(),
            group_column: self.group_column.clone(),
            outcome_columns: self.outcome_columns.clone(),
            numeric_covariates: self.expanded_covariates(),
            categorical: Vec::new(),
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub spec: ModelSpec,
    pub schema: DataSchema,
    pub run: RunSection,
}

impl ConfigFile {
    pub fn parse_str(text: &str) -> Result<ConfigFile> {
        let cfg: ConfigFile = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if self.outcomes.is_empty() {
            return Err(Error::config("at least one [[outcome]] block is required"));
        }
        for (name, levels) in &self.data.categorical {
            if levels.len() < 2 {
                return Err(Error::config(format!(
                    "categorical covariate '{name}' needs at least two levels"
                )));
            }
        }
        let schema = DataSchema {
            id_column: self.data.id_column.clone(),
            time_column: self.data.time_column.clone(),
            group_column: self.data.group_column.clone(),
            outcome_columns: self.outcomes.iter().map(|o| o.name.clone()).collect(),
            numeric_covariates: self.data.numeric_covariates.clone(),
            categorical: self
                .data
                .categorical
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        };
        let known = schema.expanded_covariates();

        let outcomes: Vec<OutcomeSpec> = self
            .outcomes
            .iter()
            .map(|o| OutcomeSpec {
                name: o.name.clone(),
                covariates: o.covariates.clone(),
                spline_df: o.spline_df,
                random_intercept: o.random_intercept,
                random_spline: o.random_spline,
            })
            .collect();
        for outcome in &outcomes {
            for cov in &outcome.covariates {
                if !known.contains(cov) {
                    return Err(Error::config(format!(
                        "outcome '{}' references covariate '{cov}' not declared in [data]",
                        outcome.name
                    )));
                }
            }
        }

        let association = if self.association.kind == AssociationKind::None {
            AssociationStructure::none()
        } else {
            let find = |label: &Option<String>, what: &str| -> Result<usize> {
                let name = label.as_ref().ok_or_else(|| {
                    Error::config(format!("association {what} outcome must be named"))
                })?;
                outcomes
                    .iter()
                    .position(|o| &o.name == name)
                    .ok_or_else(|| Error::config(format!("unknown {what} outcome '{name}'")))
            };
            AssociationStructure {
                kind: self.association.kind,
                source: find(&self.association.source, "source")?,
                target: find(&self.association.target, "target")?,
                window_d: self.association.window_d,
                normalize_by: self.association.normalize_by,
            }
        };

        let cross = self
            .random_effects
            .cross_outcome_correlation
            .unwrap_or(association.kind == AssociationKind::None);

        let spec = ModelSpec {
            outcomes,
            association,
            re_cross_outcome_correlation: cross,
            priors: self.priors.clone(),
            mcmc: self.mcmc.clone(),
        };
        spec.association.validate(spec.outcomes.len())?;
        spec.priors.validate()?;
        spec.mcmc.validate()?;
        if !(self.run.scale_report > 0.0) {
            return Err(Error::config("scale_report must be positive"));
        }
        if self.run.min_n < 1 {
            return Err(Error::config("min_n must be at least 1"));
        }
        Ok(ResolvedConfig {
            spec,
            schema,
            run: self.run.clone(),
        })
    }
}

/// Read and resolve a configuration file.
pub fn parse_config(path: &Path) -> Result<(ConfigFile, ResolvedConfig)> {
    let text = std::fs::read_to_string(path)?;
    let file = ConfigFile::parse_str(&text)?;
    let resolved = file.resolve()?;
    Ok((file, resolved))
}
