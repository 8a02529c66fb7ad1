//! Chain persistence: one CSV per chain (17-significant-digit decimals, so a
//! write/read cycle reproduces the draws bit for bit) plus a JSON sidecar
//! manifest carrying the seed, config, and config hash.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ChainDraws, ChainMeta};
use crate::model::McmcConfig;

pub const CHAINS_MANIFEST: &str = "chains_manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainFileMeta {
    chain_index: usize,
    jitter_retries: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainsManifest {
    seed: u64,
    config_hash: String,
    mcmc: McmcConfig,
    chains: Vec<ChainFileMeta>,
}

/// Chains read back from disk, with a flag for a manifest hash mismatch.
#[derive(Debug, Clone)]
pub struct ReadChains {
    pub chains: Vec<ChainDraws>,
    pub hash_mismatch: bool,
    pub config_hash: String,
}

fn chain_file(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join(format!("chain_{index}.csv"))
}

/// Write all chains and the sidecar manifest into `dir`.
pub fn write_chains(chains: &[ChainDraws], dir: &Path, config_hash: &str) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::data("no chains to write".to_string()));
    }
    std::fs::create_dir_all(dir)?;
    for draws in chains {
        let path = chain_file(dir, draws.meta.chain_index);
        let mut out = String::with_capacity(draws.draws.len() * draws.names.len() * 26);
        out.push_str(&draws.names.join(","));
        out.push('\n');
        for row in &draws.draws {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&format!("{v:.16e}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
    }
    let manifest = ChainsManifest {
        seed: chains[0].meta.seed,
        config_hash: config_hash.to_string(),
        mcmc: chains[0].meta.config.clone(),
        chains: chains
            .iter()
            .map(|c| ChainFileMeta {
                chain_index: c.meta.chain_index,
                jitter_retries: c.meta.jitter_retries,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join(CHAINS_MANIFEST), json)?;
    Ok(())
}

/// Read every chain in `dir`. A mismatch between the manifest's config hash
/// and `expected_config_hash` is reported with a warning, not an error.
pub fn read_chains(dir: &Path, expected_config_hash: Option<&str>) -> Result<ReadChains> {
    let manifest_text = std::fs::read_to_string(dir.join(CHAINS_MANIFEST))?;
    let manifest: ChainsManifest = serde_json::from_str(&manifest_text)?;
    let hash_mismatch = match expected_config_hash {
        Some(expected) if expected != manifest.config_hash => {
            log::warn!(
                "chain manifest hash {} does not match expected {}",
                manifest.config_hash,
                expected
            );
            true
        }
        _ => false,
    };
    let mut chains = Vec::with_capacity(manifest.chains.len());
    for meta in &manifest.chains {
        let path = chain_file(dir, meta.chain_index);
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty chain file", path.display())))?;
        let names: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut draws = Vec::new();
        for (line_idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|cell| {
                    cell.parse::<f64>().map_err(|_| {
                        Error::data(format!(
                            "{} line {}: non-numeric cell '{cell}'",
                            path.display(),
                            line_idx + 1
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != names.len() {
                return Err(Error::data(format!(
                    "{} line {}: ragged row with {} cells, expected {}",
                    path.display(),
                    line_idx + 1,
                    row.len(),
                    names.len()
                )));
            }
            draws.push(row);
        }
        chains.push(ChainDraws {
            names,
            draws,
            meta: ChainMeta {
                seed: manifest.seed,
                chain_index: meta.chain_index,
                config: manifest.mcmc.clone(),
                jitter_retries: meta.jitter_retries,
            },
        });
    }
    Ok(ReadChains {
        chains,
        hash_mismatch,
        config_hash: manifest.config_hash,
    })
}
