//! High-level fit driver shared by the CLI and the stratified runner.

use std::sync::Once;

use sha2::{Digest, Sha256};

use crate::data::LongitudinalDataset;
use crate::design::build_design;
use crate::diagnostics::{summarize, PosteriorSummary, SummaryOptions};
use crate::error::Result;
use crate::mcmc::{ChainDraws, GibbsSampler};
use crate::model::ModelSpec;

/// Cap on worker parallelism, read once from `MVLME_THREADS`; defaults to the
/// available cores.
pub fn init_thread_pool() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        let threads = std::env::var("MVLME_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0);
        if let Some(n) = threads {
            // Ignore failure: a pool may already exist in test harnesses.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

/// Chains plus pooled summary of one fit.
#[derive(Debug, Clone)]
pub struct FitArtifacts {
    pub chains: Vec<ChainDraws>,
    pub summary: PosteriorSummary,
}

/// Run the full pipeline on one dataset: design assembly, all chains, pooled
/// summary (with the association effect also reported per `report_scale`
/// units of the source outcome).
pub fn fit_dataset(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    report_scale: f64,
) -> Result<FitArtifacts> {
    let design = build_design(data, spec)?;
    let sampler = GibbsSampler::new(&design, spec)?;
    let chains = sampler.run_chains()?;
    let summary = summarize(
        &chains,
        &SummaryOptions {
            alpha_report_scale: Some(report_scale),
        },
    )?;
    Ok(FitArtifacts { chains, summary })
}

/// Hex SHA-256 of raw bytes; used to stamp configs into manifests.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}
