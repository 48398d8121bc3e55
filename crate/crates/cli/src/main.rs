use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bslab::config::{parse_config, resolve, ExperimentConfig};
use bslab::{run_experiment, set_threads, RunOptions};
use clap::{Args, Parser, Subcommand};

/// Spectral laboratory for sandwiched Riesz-potential operators.
#[derive(Parser)]
#[command(name = "bslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute even when a cached result exists.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Worker threads for dense linear algebra (0 = sequential).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Compute and write spectra for every configured size.
    Spectrum { config: PathBuf },
    /// Audit the Ahlfors regularity of the configured measure.
    Ahlfors { config: PathBuf },
    /// Compare measured coefficients with the Weyl prediction.
    Weyl { config: PathBuf },
    /// Closed-form spectrum of the Riesz kernel on the unit circle.
    OracleCircle {
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 512)]
        nmax: usize,
    },
}

fn load(path: &Path, experiment: Option<&str>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = parse_config(&text).with_context(|| format!("stage config ({})", path.display()))?;
    match experiment {
        Some(name) if name != cfg.experiment.as_str() => {
            let mut raw = cfg.raw;
            raw.experiment.name = name.into();
            Ok(resolve(raw).with_context(|| format!("stage config ({})", path.display()))?)
        }
        _ => Ok(cfg),
    }
}

fn oracle_config(alpha: f64, n_max: usize) -> Result<ExperimentConfig> {
    let text = format!(
        "output_dir = \"bslab-out/oracle_circle\"\n[measure]\nfamily = \"circle\"\nsize = 8\n\
         [kernel]\nalpha = {alpha:?}\n[experiment]\nname = \"oracle_circle\"\nn_max = {n_max}\n"
    );
    parse_config(&text).context("stage config")
}

fn run(cli: Cli) -> Result<bool> {
    set_threads(cli.common.threads)?;
    let mut cfg = match &cli.command {
        Command::Run { config } => load(config, None)?,
        Command::Spectrum { config } => load(config, Some("spectrum"))?,
        Command::Ahlfors { config } => load(config, Some("ahlfors"))?,
        Command::Weyl { config } => load(config, Some("weyl_check"))?,
        Command::OracleCircle { alpha, nmax } => oracle_config(*alpha, *nmax)?,
    };
    if let Some(out) = cli.common.out {
        cfg.output_dir = out;
    }
    let opts = RunOptions { use_cache: !cli.common.no_cache, ..RunOptions::default() };
    let report = run_experiment(&cfg, &opts)?;
    print!("{}", report.to_text());
    println!("output_dir = {}", cfg.output_dir.display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
