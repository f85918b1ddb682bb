mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hgn::HgnError;

use commands::{CliError, CliResult};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "hgn", version, about = "Synthetic eye data, training and evaluation for heatmap-based gaze estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset file.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network; writes checkpoint.json and metrics.log into --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Angular error report of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Optional per-sample error dump (tab-separated).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quality histogram, quantile manifest and quantile images.
    Quality {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated quantiles in [0, 1].
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        quantiles: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlay image of one sample with predicted landmarks and gaze.
    Viz {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the training objective on a toy network.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate every configured mode under one budget.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), HgnError> {
    let n = match std::env::var("HGN_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| HgnError::Usage(format!("HGN_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HgnError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<String> {
    init_threads()?;
    let load = |p: &Option<PathBuf>| RunConfig::load(p.as_deref());
    match cli.command {
        Command::Generate { config, seed, out } => commands::generate(&load(&config)?, seed, &out),
        Command::Train { config, seed, dataset, out } => commands::train_cmd(&load(&config)?, seed, &dataset, &out),
        Command::Eval { checkpoint, dataset, out } => commands::eval_cmd(&checkpoint, &dataset, out.as_deref()),
        Command::Quality { checkpoint, dataset, quantiles, out } => {
            let q = commands::parse_quantiles(&quantiles)?;
            commands::quality_cmd(&checkpoint, &dataset, &q, &out)
        }
        Command::Viz { checkpoint, dataset, index, out } => commands::viz_cmd(&checkpoint, &dataset, index, &out),
        Command::Gradcheck { config, seed } => commands::gradcheck_cmd(&load(&config)?, seed),
        Command::Ablate { config, seed, out } => commands::ablate_cmd(&load(&config)?, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("error_category={}", e.category());
    eprintln!("error_message={}", e.to_string().replace('\n', " | "));
    if let CliError::GradCheckFailed(text) = e {
        print!("{text}");
    }
    ExitCode::from(if e.is_usage() { 2 } else { 1 })
}
