//! Command line front end: Monte Carlo sweeps, analytic curves, limit
//! tables, complete-network size scans, and compartment PMF evaluation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use contagion::config::RunConfig;
use contagion::harness::{self, ExperimentSummary};
use contagion::shock::{self, CompartmentVector};

#[derive(Parser)]
#[command(
    name = "contagion",
    version,
    about = "Default contagion on random regular interbank networks"
)]
struct Cli {
    /// TOML run configuration; defaults apply for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reference scale: 10^4 banks, 5000 realizations per cell.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over every (k, leverage, rho) cell.
    Simulate,
    /// Analytic expected default fraction curves (no simulation).
    Analytic,
    /// Infinite-network limit table (no simulation).
    Limit,
    /// Complete-network scan over the configured sizes.
    SizeScan,
    /// Evaluate the compartment-count PMF for one composition.
    Pmf {
        /// Comma-separated compartment counts, e.g. 2,1,7.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<u64>,
        /// Shock correlation; defaults to the first configured rho.
        #[arg(long)]
        rho: Option<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_path(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if cli.paper_scale {
        config = config.at_paper_scale();
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn print_summaries(rows: &[ExperimentSummary]) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    println!(
        "{:>6} {:>9} {:>6} {:>6} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "k", "leverage", "rho", "n", "realiz", "q_mean", "triggered", "q_analytic", "q_limit", "cvna"
    );
    for s in rows {
        println!(
            "{:>6} {:>9} {:>6} {:>6} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
            s.k,
            s.leverage,
            s.rho,
            s.n,
            s.n_realizations,
            fmt(s.q_mean),
            fmt(s.triggered_fraction),
            fmt(s.q_analytic),
            fmt(s.q_limit),
            fmt(s.cvna_ratio),
        );
    }
}

fn sweep_and_write(config: &RunConfig, rows: Vec<ExperimentSummary>) -> Result<()> {
    print_summaries(&rows);
    let paths = harness::write_outputs(&rows, config)?;
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Simulate => {
            let rows = harness::run_sweep(&config)?;
            sweep_and_write(&config, rows)
        }
        Command::Analytic => {
            config.modes.simulate = false;
            config.modes.analytic = true;
            config.modes.limit = false;
            let rows = harness::run_sweep(&config)?;
            sweep_and_write(&config, rows)
        }
        Command::Limit => {
            config.modes.simulate = false;
            config.modes.analytic = false;
            config.modes.limit = true;
            let rows = harness::run_sweep(&config)?;
            sweep_and_write(&config, rows)
        }
        Command::SizeScan => {
            let rows = harness::size_scan(&config)?;
            sweep_and_write(&config, rows)
        }
        Command::Pmf { counts, rho } => {
            if counts.len() != config.probs.len() {
                bail!(
                    "expected {} compartment counts, got {}",
                    config.probs.len(),
                    counts.len()
                );
            }
            let rho = rho.unwrap_or(config.rhos[0]);
            let composition = CompartmentVector::new(counts);
            let independent = shock::multinomial_pmf(&composition, &config.probs);
            println!("multinomial (rho = 0): {independent:.12}");
            if rho > 0.0 {
                let correlated = shock::correlated_pmf(&composition, &config.probs, rho)
                    .context("correlated PMF quadrature")?;
                println!("correlated (rho = {rho}): {correlated:.12}");
            }
            Ok(())
        }
    }
}
