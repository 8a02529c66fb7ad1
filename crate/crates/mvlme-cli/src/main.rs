//! Command-line front end: fit, fit-strata, simulate, summarize, validate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config validation error,
//! 3 numerical failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mvlme::io::{self, StratifiedOptions};
use mvlme::model::AssociationKind;
use mvlme::{
    config_hash, fit_dataset, run_sensitivity, summarize, Error, FunctionalKind, McmcConfig,
    ModelSpec, SimulationScenario, SummaryOptions,
};

#[derive(Parser)]
#[command(
    name = "mvlme",
    version,
    about = "Bayesian multivariate mixed-effects models for longitudinal outcomes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a single dataset and write chains plus a summary.
    Fit(FitArgs),
    /// Fit the model separately for each group of a stratified dataset.
    FitStrata(FitStrataArgs),
    /// Run the sensitivity-analysis simulation harness.
    Simulate(SimulateArgs),
    /// Summarize persisted chains into a posterior summary CSV.
    Summarize(SummarizeArgs),
    /// Check a configuration and dataset without fitting.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonFitArgs {
    /// TOML model configuration.
    #[arg(long)]
    config: PathBuf,
    /// Long-format data CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the MCMC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Override the association window (years).
    #[arg(long = "window-d")]
    window_d: Option<f64>,
    /// Report the association effect per this many source-outcome units.
    #[arg(long = "scale-report")]
    scale_report: Option<f64>,
    /// Use the full published schedule (2 chains, 28,000 iterations,
    /// burn-in 3,000, thin 50, adaptive phase 3,000).
    #[arg(long = "full-schedule")]
    full_schedule: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonFitArgs,
}

#[derive(Args)]
struct FitStrataArgs {
    #[command(flatten)]
    common: CommonFitArgs,
    /// Grouping column (defaults to the config's group column).
    #[arg(long = "group-col")]
    group_col: Option<String>,
    /// Minimum subjects per group; smaller groups are skipped.
    #[arg(long = "min-n")]
    min_n: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// True association kinds, comma separated (value, slope, auc).
    #[arg(long, default_value = "value,slope,auc")]
    kinds: String,
    /// Replicates per scenario.
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Subjects per replicate.
    #[arg(long, default_value_t = 200)]
    subjects: usize,
    /// Scenario and sampler seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fit with the full published schedule instead of the desk-scale one.
    #[arg(long = "full-schedule")]
    full_schedule: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Directory holding chain_<k>.csv files and their manifest.
    chains_dir: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Report the association effect per this many source-outcome units.
    #[arg(long = "scale-report", default_value_t = 0.1)]
    scale_report: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

fn apply_overrides(spec: &mut ModelSpec, args: &CommonFitArgs) -> Result<(), Error> {
    if args.full_schedule {
        let full = McmcConfig::default();
        spec.mcmc.n_iter = full.n_iter;
        spec.mcmc.burn_in = full.burn_in;
        spec.mcmc.thin = full.thin;
        spec.mcmc.adapt = full.adapt;
        spec.mcmc.n_chains = full.n_chains;
    }
    if let Some(seed) = args.seed {
        spec.mcmc.seed = seed;
    }
    if let Some(chains) = args.chains {
        spec.mcmc.n_chains = chains;
    }
    if let Some(d) = args.window_d {
        if spec.association.kind == AssociationKind::None {
            return Err(Error::Config(
                "--window-d requires an association kind in the config".to_string(),
            ));
        }
        spec.association.window_d = Some(d);
    }
    spec.mcmc.validate()?;
    spec.association.validate(spec.outcomes.len())?;
    Ok(())
}

struct LoadedRun {
    spec: ModelSpec,
    data: mvlme::LongitudinalDataset,
    hash: String,
    scale_report: f64,
    min_n: usize,
}

fn load_run(common: &CommonFitArgs) -> Result<LoadedRun, Error> {
    let (_, resolved) = io::parse_config(&common.config)?;
    let mut spec = resolved.spec;
    apply_overrides(&mut spec, common)?;
    let data = io::load_long_csv(&common.data, &resolved.schema)?;
    let bytes = std::fs::read(&common.config)?;
    Ok(LoadedRun {
        spec,
        data,
        hash: config_hash(&bytes),
        scale_report: common.scale_report.unwrap_or(resolved.run.scale_report),
        min_n: resolved.run.min_n,
    })
}

fn write_fit_manifest(
    out: &std::path::Path,
    hash: &str,
    seed: u64,
    started_at: &str,
) -> Result<(), Error> {
    let manifest = io::RunManifest {
        config_hash: hash.to_string(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: started_at.to_string(),
        finished_at: chrono_now(),
        groups: vec![io::GroupRecord {
            label: "all".to_string(),
            n_subjects: 0,
            status: io::GroupStatus::Fitted,
            error: None,
        }],
    };
    io::stratified::write_manifest(&manifest, &out.join("manifest.json"))
}

fn chrono_now() -> String {
    // chrono is already a dependency of the library; go through a tiny shim
    // so the CLI does not need its own copy.
    mvlme::io::stratified::timestamp()
}

fn run_fit(args: FitArgs) -> Result<(), Error> {
    let started = chrono_now();
    let run = load_run(&args.common)?;
    let n = run.data.n_subjects();
    run.spec.validate(&run.data)?;
    let artifacts = fit_dataset(&run.data, &run.spec, run.scale_report)?;
    std::fs::create_dir_all(&args.common.out)?;
    io::write_chains(&artifacts.chains, &args.common.out.join("chains"), &run.hash)?;
    io::write_summary_csv(&artifacts.summary, &args.common.out.join("summary.csv"))?;
    write_fit_manifest(&args.common.out, &run.hash, run.spec.mcmc.seed, &started)?;
    println!(
        "fitted {n} subjects; wrote {}",
        args.common.out.join("summary.csv").display()
    );
    Ok(())
}

fn run_fit_strata(args: FitStrataArgs) -> Result<(), Error> {
    let run = load_run(&args.common)?;
    let group_col = args
        .group_col
        .or_else(|| run.data.group_column.clone())
        .ok_or_else(|| {
            Error::Config("no group column: set --group-col or [data].group_column".to_string())
        })?;
    let min_n = args.min_n.unwrap_or(run.min_n);
    let options = StratifiedOptions {
        out_dir: Some(args.common.out.clone()),
        report_scale: run.scale_report,
        config_hash: run.hash.clone(),
    };
    let (manifest, reports) =
        io::stratified_fit(&run.data, &run.spec, &group_col, min_n, &options)?;
    let fitted = reports.len();
    let skipped = manifest
        .groups
        .iter()
        .filter(|g| g.status == io::GroupStatus::SkippedSmallN)
        .count();
    let failed = manifest
        .groups
        .iter()
        .filter(|g| g.status == io::GroupStatus::Failed)
        .count();
    println!(
        "groups: {fitted} fitted, {skipped} skipped (n < {min_n}), {failed} failed; wrote {}",
        args.common.out.join("group_report.csv").display()
    );
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<(), Error> {
    let kinds: Vec<FunctionalKind> = args
        .kinds
        .split(',')
        .map(|k| match k.trim() {
            "value" => Ok(FunctionalKind::Value),
            "slope" => Ok(FunctionalKind::Slope),
            "auc" => Ok(FunctionalKind::Auc),
            other => Err(Error::Config(format!("unknown kind '{other}'"))),
        })
        .collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err(Error::Config("at least one kind is required".to_string()));
    }
    let scenarios: Vec<SimulationScenario> = kinds
        .iter()
        .map(|&k| {
            let mut sc = SimulationScenario::defaults(k, args.seed);
            sc.n_subjects = args.subjects;
            sc
        })
        .collect();
    let mcmc = if args.full_schedule {
        McmcConfig::full_schedule(args.seed)
    } else {
        McmcConfig::desk_scale(args.seed)
    };
    let output = run_sensitivity(&scenarios, args.replicates, &mcmc)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_bias_table_csv(&output.bias, &args.out.join("bias_table.csv"))?;
    io::write_replicate_summaries_csv(
        &output.replicate_rows,
        &args.out.join("replicate_summaries.csv"),
    )?;
    println!(
        "{} scenario(s) x {} replicates, {} failures; wrote {}",
        scenarios.len(),
        args.replicates,
        output.bias.failures.len(),
        args.out.join("bias_table.csv").display()
    );
    Ok(())
}

fn run_summarize(args: SummarizeArgs) -> Result<(), Error> {
    let read = io::read_chains(&args.chains_dir, None)?;
    let summary = summarize(
        &read.chains,
        &SummaryOptions {
            alpha_report_scale: Some(args.scale_report),
        },
    )?;
    io::write_summary_csv(&summary, &args.out)?;
    println!(
        "summarized {} chains ({} draws); wrote {}",
        summary.n_chains,
        summary.n_draws,
        args.out.display()
    );
    Ok(())
}

fn run_validate(args: ValidateArgs) -> Result<(), Error> {
    let (_, resolved) = io::parse_config(&args.config)?;
    let data = io::load_long_csv(&args.data, &resolved.schema)?;
    resolved.spec.validate(&data)?;
    mvlme::build_design(&data, &resolved.spec)?;
    println!(
        "OK: {} subjects, {} outcomes, association {:?}",
        data.n_subjects(),
        data.n_outcomes(),
        resolved.spec.association.kind
    );
    Ok(())
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Numerical { .. } | Error::LinearAlgebra(_) => 3,
        _ => 2,
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    let result = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::FitStrata(args) => run_fit_strata(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Summarize(args) => run_summarize(args),
        Command::Validate(args) => run_validate(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
