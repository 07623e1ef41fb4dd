//! `gar`: growth-at-risk pipeline driver. Each subcommand reads a TOML run
//! config, consumes the artifacts of earlier stages from the output
//! directory and writes its own products plus a manifest.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Run;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gar", version, about = "Growth-at-risk with TVP-SV regressions")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build regression datasets from raw CSVs.
    Preprocess,
    /// Write a synthetic dataset from the [synthetic] section.
    Simulate,
    /// Full-sample TVP-SV and quantile-regression fits.
    Fit,
    /// Recursive out-of-sample quantile forecasts.
    Forecast,
    /// Quantile scores, relative scores and tail dispersion.
    Evaluate,
    /// Rolling linear summaries of predicted quantiles.
    Decompose,
    /// Getting-it-right test of the sampler.
    Girtest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
            Command::Decompose => "decompose",
            Command::Girtest => "girtest",
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = cli.output.clone().unwrap_or_else(|| cfg.resolve(&cfg.output));
    let run = Run { cfg, out, seed };
    match cli.command {
        Command::Preprocess => commands::preprocess(&run),
        Command::Simulate => commands::simulate(&run),
        Command::Fit => commands::fit(&run),
        Command::Forecast => commands::forecast(&run),
        Command::Evaluate => commands::evaluate_cmd(&run),
        Command::Decompose => commands::decompose(&run),
        Command::Girtest => commands::girtest(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json(cli.command.name()));
            ExitCode::FAILURE
        }
    }
}
