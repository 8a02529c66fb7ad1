//! Convergence diagnostics and posterior summarization.

use crate::error::{Error, Result};
use crate::mcmc::ChainDraws;
use crate::util::{mean, quantile_type7, sample_variance};

/// Summary of one parameter's pooled posterior draws.
#[derive(Debug, Clone)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// Split Gelman-Rubin statistic; absent for single chains or degenerate
    /// (constant) draws.
    pub rhat: Option<f64>,
    /// Autocorrelation-based effective sample size; absent for degenerate
    /// draws.
    pub ess: Option<f64>,
    /// Two-sided posterior tail probability 2 min(Pr <= 0, Pr >= 0).
    pub bayes_p: f64,
}

/// Posterior summaries for all retained parameters.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub params: Vec<ParameterSummary>,
    pub n_draws: usize,
    pub n_chains: usize,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Options for [`summarize`].
#[derive(Debug, Clone, Default)]
pub struct SummaryOptions {
    /// When set and an `alpha` column exists, an extra `alpha_scaled` row
    /// reports the effect of a `scale`-unit change of the source outcome
    /// (draws multiplied by the scale).
    pub alpha_report_scale: Option<f64>,
}

/// Split each chain into halves, dropping the middle draw of odd-length
/// chains so both halves have equal length.
fn split_halves<'c>(chains: &[&'c [f64]]) -> Result<Vec<&'c [f64]>> {
    let mut halves = Vec::with_capacity(2 * chains.len());
    for chain in chains {
        let n = chain.len();
        if n < 4 {
            return Err(Error::diagnostics(format!(
                "chain too short for split diagnostics: {n} draws"
            )));
        }
        let half = n / 2;
        halves.push(&chain[..half]);
        halves.push(&chain[n - half..]);
    }
    Ok(halves)
}

fn check_equal_lengths(chains: &[&[f64]], min_len: usize) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::diagnostics("no chains supplied"));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::diagnostics("chains must have equal retained lengths"));
    }
    if n < min_len {
        return Err(Error::diagnostics(format!(
            "chains must have at least {min_len} retained draws, got {n}"
        )));
    }
    Ok(())
}

/// Split Gelman-Rubin statistic: each chain is halved, and the statistic is
/// sqrt of (within-weighted marginal variance) / (within variance).
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::diagnostics(
            "Gelman-Rubin diagnostic needs at least two chains",
        ));
    }
    check_equal_lengths(chains, 10)?;
    let halves = split_halves(chains)?;
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;

    let chain_means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let grand = mean(&chain_means);
    let between = chain_means
        .iter()
        .map(|cm| (cm - grand).powi(2))
        .sum::<f64>()
        * n
        / (m - 1.0);
    let within = halves.iter().map(|c| sample_variance(c)).sum::<f64>() / m;
    if within <= 0.0 {
        return Err(Error::diagnostics(
            "zero within-chain variance (constant chains)",
        ));
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok((var_plus / within).sqrt())
}

/// Effective sample size across chains: combined-chain autocorrelations with
/// the initial-positive-sequence truncation of the paired sums.
pub fn effective_sample_size(chains: &[&[f64]]) -> Result<f64> {
    check_equal_lengths(chains, 10)?;
    let halves = split_halves(chains)?;
    let m = halves.len() as f64;
    let n = halves[0].len();
    let total = m * n as f64;

    let chain_means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = halves.iter().map(|c| sample_variance(c)).collect();
    let within = chain_vars.iter().sum::<f64>() / m;
    if within <= 0.0 {
        return Err(Error::diagnostics(
            "zero within-chain variance (constant chains)",
        ));
    }
    let grand = mean(&chain_means);
    let between_n = chain_means
        .iter()
        .map(|cm| (cm - grand).powi(2))
        .sum::<f64>()
        / (m - 1.0).max(1.0);
    let var_plus = (n as f64 - 1.0) / n as f64 * within + between_n;

    // Combined autocorrelation at each lag, averaged over chains.
    let acov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for (c, chain) in halves.iter().enumerate() {
            let cm = chain_means[c];
            let mut s = 0.0;
            for i in 0..n - lag {
                s += (chain[i] - cm) * (chain[i + lag] - cm);
            }
            acc += s / n as f64;
        }
        acc / m
    };

    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 < n {
        let rho_a = 1.0 - (within - acov(lag)) / var_plus;
        let rho_b = 1.0 - (within - acov(lag + 1)) / var_plus;
        let pair = rho_a + rho_b;
        if pair < 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    Ok((total / tau).min(total).max(1e-12))
}

/// Two-sided posterior tail probability: 2 min(Pr(x <= 0), Pr(x >= 0)),
/// capped at 1; exact zeros count on both sides.
pub fn bayes_p(draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::diagnostics("bayes_p needs at least one draw"));
    }
    let n = draws.len() as f64;
    let le = draws.iter().filter(|v| **v <= 0.0).count() as f64 / n;
    let ge = draws.iter().filter(|v| **v >= 0.0).count() as f64 / n;
    Ok((2.0 * le.min(ge)).min(1.0))
}

fn summarize_column(name: &str, per_chain: &[Vec<f64>]) -> Result<ParameterSummary> {
    let mut pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(Error::diagnostics(format!("no draws for parameter {name}")));
    }
    let mn = mean(&pooled);
    let sd = sample_variance(&pooled).sqrt();
    let p = bayes_p(&pooled)?;
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q025 = quantile_type7(&pooled, 0.025);
    let q975 = quantile_type7(&pooled, 0.975);

    let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
    let rhat = if per_chain.len() >= 2 {
        gelman_rubin(&refs).ok()
    } else {
        None
    };
    let ess = effective_sample_size(&refs).ok();
    Ok(ParameterSummary {
        name: name.to_string(),
        mean: mn,
        sd,
        q025,
        q975,
        rhat,
        ess,
        bayes_p: p,
    })
}

/// Pool retained draws across chains and summarize every parameter.
pub fn summarize(chains: &[ChainDraws], options: &SummaryOptions) -> Result<PosteriorSummary> {
    if chains.is_empty() {
        return Err(Error::diagnostics("summarize needs at least one chain"));
    }
    let names = &chains[0].names;
    for c in chains {
        if &c.names != names {
            return Err(Error::diagnostics("chains disagree on parameter names"));
        }
        if c.n_retained() == 0 {
            return Err(Error::diagnostics("chain has no retained draws"));
        }
    }
    let mut params = Vec::with_capacity(names.len() + 1);
    for (idx, name) in names.iter().enumerate() {
        let per_chain: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.draws.iter().map(|row| row[idx]).collect())
            .collect();
        params.push(summarize_column(name, &per_chain)?);
        if name == "alpha" {
            if let Some(scale) = options.alpha_report_scale {
                let scaled: Vec<Vec<f64>> = per_chain
                    .iter()
                    .map(|c| c.iter().map(|v| v * scale).collect())
                    .collect();
                params.push(summarize_column("alpha_scaled", &scaled)?);
            }
        }
    }
    Ok(PosteriorSummary {
        params,
        n_draws: chains.iter().map(ChainDraws::n_retained).sum(),
        n_chains: chains.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::ChainMeta;
    use crate::model::McmcConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chain(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + shift
            })
            .collect()
    }

    #[test]
    fn rhat_near_one_for_iid_chains() {
        let a = normal_chain(1, 500, 0.0);
        let b = normal_chain(2, 500, 0.0);
        let r = gelman_rubin(&[&a, &b]).unwrap();
        assert!((0.99..1.05).contains(&r), "rhat = {r}");
    }

    #[test]
    fn rhat_large_for_offset_chains() {
        let a = normal_chain(1, 500, 0.0);
        let b = normal_chain(2, 500, 50.0);
        let r = gelman_rubin(&[&a, &b]).unwrap();
        assert!(r > 1.1, "rhat = {r}");
    }

    #[test]
    fn rhat_rejects_degenerate_input() {
        let a = vec![1.0; 100];
        let b = vec![1.0; 100];
        assert!(gelman_rubin(&[&a, &b]).is_err());
        let c = normal_chain(3, 100, 0.0);
        assert!(gelman_rubin(&[&c]).is_err());
        let short = normal_chain(4, 5, 0.0);
        let short2 = normal_chain(5, 5, 0.0);
        assert!(gelman_rubin(&[&short, &short2]).is_err());
    }

    #[test]
    fn ess_of_iid_draws_is_near_total() {
        let a = normal_chain(10, 2000, 0.0);
        let b = normal_chain(11, 2000, 0.0);
        let ess = effective_sample_size(&[&a, &b]).unwrap();
        let total = 4000.0;
        assert!((ess - total).abs() < 0.2 * total, "ess = {ess}");
    }

    #[test]
    fn ess_of_ar1_chain_matches_formula() {
        // AR(1) with coefficient 0.9: ESS ~= total * (1 - rho) / (1 + rho).
        let rho: f64 = 0.9;
        let gen = |seed: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut x = 0.0;
            let innovation_sd = (1.0 - rho * rho).sqrt();
            (0..20_000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x = rho * x + innovation_sd * z;
                    x
                })
                .collect::<Vec<f64>>()
        };
        let a = gen(21);
        let b = gen(22);
        let ess = effective_sample_size(&[&a, &b]).unwrap();
        let expected = 40_000.0 * (1.0 - rho) / (1.0 + rho);
        assert!(
            (ess - expected).abs() < 0.3 * expected,
            "ess = {ess}, expected about {expected}"
        );
    }

    #[test]
    fn ess_rejects_constant_chain() {
        let a = vec![2.0; 100];
        assert!(effective_sample_size(&[&a]).is_err());
    }

    #[test]
    fn bayes_p_basics() {
        assert_eq!(bayes_p(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let sym: Vec<f64> = (-50..=50).map(|i| i as f64).collect();
        assert!((bayes_p(&sym).unwrap() - 1.0).abs() < 0.05);
        assert!(bayes_p(&[]).is_err());
    }

    #[test]
    fn bayes_p_matches_normal_tail() {
        let draws: Vec<f64> = normal_chain(31, 100_000, 1.959964);
        let p = bayes_p(&draws).unwrap();
        assert!((p - 0.05).abs() < 0.005, "p = {p}");
    }

    #[test]
    fn bayes_p_invariant_under_positive_rescaling() {
        let draws = normal_chain(32, 5_000, 0.4);
        let p1 = bayes_p(&draws).unwrap();
        let scaled: Vec<f64> = draws.iter().map(|v| v * 17.5).collect();
        assert_eq!(p1, bayes_p(&scaled).unwrap());
    }

    fn fake_chains(columns: Vec<(&str, Vec<Vec<f64>>)>) -> Vec<ChainDraws> {
        let n_chains = columns[0].1.len();
        let names: Vec<String> = columns.iter().map(|(n, _)| n.to_string()).collect();
        (0..n_chains)
            .map(|c| {
                let n = columns[0].1[c].len();
                let draws: Vec<Vec<f64>> = (0..n)
                    .map(|i| columns.iter().map(|(_, data)| data[c][i]).collect())
                    .collect();
                ChainDraws {
                    names: names.clone(),
                    draws,
                    meta: ChainMeta {
                        seed: 0,
                        chain_index: c,
                        config: McmcConfig::default(),
                        jitter_retries: 0,
                    },
                }
            })
            .collect()
    }

    #[test]
    fn summarize_constant_column() {
        let chains = fake_chains(vec![("theta", vec![vec![2.5; 40], vec![2.5; 40]])]);
        let s = summarize(&chains, &SummaryOptions::default()).unwrap();
        let p = s.get("theta").unwrap();
        assert_eq!(p.mean, 2.5);
        assert_eq!(p.sd, 0.0);
        assert_eq!(p.q025, p.q975);
        assert!(p.rhat.is_none());
        assert!(p.ess.is_none());
    }

    #[test]
    fn summarize_known_normal_sample() {
        let a = normal_chain(41, 4_000, 3.0);
        let b = normal_chain(42, 4_000, 3.0);
        let chains = fake_chains(vec![("theta", vec![a, b])]);
        let s = summarize(&chains, &SummaryOptions::default()).unwrap();
        let p = s.get("theta").unwrap();
        let se = 1.0 / (8_000.0f64).sqrt();
        assert!((p.mean - 3.0).abs() < 3.0 * se);
        assert!((p.sd - 1.0).abs() < 0.05);
        assert!(p.rhat.unwrap() < 1.05);
    }

    #[test]
    fn summarize_scales_alpha_exactly() {
        let a = normal_chain(51, 1_000, -10.0);
        let b = normal_chain(52, 1_000, -10.0);
        let chains = fake_chains(vec![("alpha", vec![a, b])]);
        let s = summarize(
            &chains,
            &SummaryOptions {
                alpha_report_scale: Some(0.1),
            },
        )
        .unwrap();
        let raw = s.get("alpha").unwrap();
        let scaled = s.get("alpha_scaled").unwrap();
        // Draws are scaled exactly; the summary reaggregates them, so means
        // agree to rounding.
        assert!((scaled.mean - raw.mean * 0.1).abs() < 1e-14 * raw.mean.abs());
        assert!((scaled.q025 - raw.q025 * 0.1).abs() < 1e-14 * raw.q025.abs());
        assert_eq!(scaled.bayes_p, raw.bayes_p);
    }

    #[test]
    fn summarize_mean_invariant_to_chain_order() {
        let a = normal_chain(61, 500, 1.0);
        let b = normal_chain(62, 500, 1.2);
        let fwd = fake_chains(vec![("theta", vec![a.clone(), b.clone()])]);
        let rev = fake_chains(vec![("theta", vec![b, a])]);
        let s1 = summarize(&fwd, &SummaryOptions::default()).unwrap();
        let s2 = summarize(&rev, &SummaryOptions::default()).unwrap();
        assert!((s1.get("theta").unwrap().mean - s2.get("theta").unwrap().mean).abs() < 1e-12);
        assert_eq!(s1.get("theta").unwrap().q025, s2.get("theta").unwrap().q025);
    }
}
