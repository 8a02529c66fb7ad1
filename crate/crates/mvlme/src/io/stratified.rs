//! Stratified per-group fitting driver: split the dataset by a grouping
//! column, skip groups below the subject threshold, fit the rest, and emit a
//! manifest plus per-group association reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::driver::{fit_dataset, FitArtifacts};
use crate::error::{Error, Result};
use crate::io::chains::write_chains;
use crate::io::report::write_group_report_csv;
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    Fitted,
    SkippedSmallN,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupRecord {
    pub label: String,
    pub n_subjects: usize,
    pub status: GroupStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run-level manifest: configuration identity plus one status per group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub groups: Vec<GroupRecord>,
}

/// Association-parameter summary of one fitted group.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub bayes_p: f64,
    pub scaled_mean: f64,
    pub scaled_sd: f64,
    pub scaled_q025: f64,
    pub scaled_q975: f64,
}

/// Per-group report row; produced only for fitted groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group: String,
    pub n_subjects: usize,
    pub window_d: Option<f64>,
    pub scale_factor: f64,
    pub alpha: Option<AlphaSummary>,
}

#[derive(Debug, Clone)]
pub struct StratifiedOptions {
    /// When set, chains, the group report, and the manifest are written here.
    pub out_dir: Option<PathBuf>,
    pub report_scale: f64,
    pub config_hash: String,
}

impl Default for StratifiedOptions {
    fn default() -> Self {
        StratifiedOptions {
            out_dir: None,
            report_scale: 0.1,
            config_hash: String::new(),
        }
    }
}

/// RFC 3339 timestamp for manifests.
pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn sanitize_label(label: &str) -> String {
    let cleaned: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "group".to_string()
    } else {
        cleaned
    }
}

fn subset(data: &LongitudinalDataset, indices: &[usize]) -> LongitudinalDataset {
    let mut out = data.clone();
    out.subjects = indices.iter().map(|&i| data.subjects[i].clone()).collect();
    out
}

fn alpha_summary(artifacts: &FitArtifacts) -> Option<AlphaSummary> {
    let raw = artifacts.summary.get("alpha")?;
    let scaled = artifacts.summary.get("alpha_scaled")?;
    Some(AlphaSummary {
        mean: raw.mean,
        sd: raw.sd,
        q025: raw.q025,
        q975: raw.q975,
        rhat: raw.rhat,
        ess: raw.ess,
        bayes_p: raw.bayes_p,
        scaled_mean: scaled.mean,
        scaled_sd: scaled.sd,
        scaled_q025: scaled.q025,
        scaled_q975: scaled.q975,
    })
}

/// Fit the model once per group. Groups with fewer than `min_n` subjects are
/// skipped; failures are recorded and the run continues. Every group fit uses
/// the same seed from the spec, so identical groups produce identical
/// results.
pub fn stratified_fit(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    group_column: &str,
    min_n: usize,
    options: &StratifiedOptions,
) -> Result<(RunManifest, Vec<GroupReport>)> {
    if min_n < 1 {
        return Err(Error::config("min_n must be at least 1"));
    }
    if data.group_column.as_deref() != Some(group_column) {
        return Err(Error::data(format!(
            "unknown group column '{group_column}' (dataset was loaded with {:?})",
            data.group_column
        )));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, subject) in data.subjects.iter().enumerate() {
        let label = subject.group.clone().ok_or_else(|| {
            Error::data(format!("subject '{}' has no group label", subject.id))
        })?;
        groups.entry(label).or_default().push(i);
    }

    // Distinct output directories per group, even after sanitizing.
    let mut dir_names: BTreeMap<String, String> = BTreeMap::new();
    for label in groups.keys() {
        let dir = sanitize_label(label);
        if dir_names.values().any(|d| d == &dir) {
            return Err(Error::data(format!(
                "group labels collide after sanitizing: '{label}' -> '{dir}'"
            )));
        }
        dir_names.insert(label.clone(), dir);
    }

    let started_at = timestamp();
    crate::driver::init_thread_pool();
    let jobs: Vec<(&String, &Vec<usize>)> = groups.iter().collect();
    let outcomes: Vec<(String, usize, std::result::Result<GroupReport, String>)> = jobs
        .par_iter()
        .map(|(label, indices)| {
            let n = indices.len();
            if n < min_n {
                return (
                    (*label).clone(),
                    n,
                    Err(format!("skipped: {n} subjects < min_n = {min_n}")),
                );
            }
            let group_data = subset(data, indices);
            let run = || -> Result<GroupReport> {
                let artifacts = fit_dataset(&group_data, spec, options.report_scale)?;
                if let Some(dir) = &options.out_dir {
                    let chain_dir = dir.join("chains").join(&dir_names[*label]);
                    write_chains(&artifacts.chains, &chain_dir, &options.config_hash)?;
                }
                Ok(GroupReport {
                    group: (*label).clone(),
                    n_subjects: n,
                    window_d: spec.association.window_d,
                    scale_factor: options.report_scale,
                    alpha: alpha_summary(&artifacts),
                })
            };
            match run() {
                Ok(report) => ((*label).clone(), n, Ok(report)),
                Err(e) => ((*label).clone(), n, Err(format!("failed: {e}"))),
            }
        })
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut reports = Vec::new();
    for (label, n, outcome) in outcomes {
        match outcome {
            Ok(report) => {
                records.push(GroupRecord {
                    label,
                    n_subjects: n,
                    status: GroupStatus::Fitted,
                    error: None,
                });
                reports.push(report);
            }
            Err(message) if message.starts_with("skipped") => records.push(GroupRecord {
                label,
                n_subjects: n,
                status: GroupStatus::SkippedSmallN,
                error: None,
            }),
            Err(message) => records.push(GroupRecord {
                label,
                n_subjects: n,
                status: GroupStatus::Failed,
                error: Some(message),
            }),
        }
    }
    if reports.is_empty() {
        log::warn!("no group reached min_n = {min_n}; report is empty");
    }

    let manifest = RunManifest {
        config_hash: options.config_hash.clone(),
        seed: spec.mcmc.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: timestamp(),
        groups: records,
    };

    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir)?;
        write_group_report_csv(&reports, &dir.join("group_report.csv"))?;
        write_manifest(&manifest, &dir.join("manifest.json"))?;
    }
    Ok((manifest, reports))
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json)?;
    Ok(())
}
