//! `srnn`: train, evaluate, cost, gradient-check and generate data for
//! spiking recurrent networks.
//!
//! Exit status is 0 on success, 1 on a numeric failure (divergence, a
//! failed gradient check) and 2 on a usage or configuration error.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<srnn::Error> for Failure {
    fn from(e: srnn::Error) -> Self {
        match e {
            srnn::Error::Numeric(m) => Failure::Numeric(m),
            other => Failure::Usage(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "srnn", version, about = "Spiking recurrent neural networks trained with surrogate gradients")]
struct Cli {
    /// Worker threads for per-sample parallelism. Results do not depend on it.
    #[arg(long, global = true, value_parser = parse_threads)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a run config and write model, metrics and costs.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the network and shuffling seeds of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on a dataset manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where to write prediction CSVs (default: the model's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step MAC/AC counts and energy of an architecture or a model.
    Energy {
        /// Architecture JSON (one object or an array).
        #[arg(long, conflicts_with = "model")]
        arch: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset used to measure the firing rate of `--model`.
        #[arg(long, requires = "model")]
        data: Option<PathBuf>,
        /// Mean firing rate in [0, 1].
        #[arg(long, value_parser = parse_fr)]
        fr: Option<f64>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check backward against finite differences and an unrolled graph.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Give the reference a different surrogate; the check must fail.
        #[arg(long)]
        corrupt_surrogate: bool,
        #[arg(long)]
        zero_weights: bool,
    },
    /// Materialize the task of a config as dataset files.
    Gen {
        /// A run config or a bare task section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_fr(s: &str) -> Result<f64, String> {
    let fr: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&fr) {
        Ok(fr)
    } else {
        Err(format!("firing rate {fr} is outside [0, 1]"))
    }
}

fn parse_threads(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("expected a positive thread count, got {s:?}")),
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Train { config, seed, out } => commands::train(&config, seed, out.as_deref()).map(|_| true),
        Command::Eval { model, data, out } => commands::eval(&model, &data, out.as_deref()).map(|_| true),
        Command::Energy {
            arch,
            model,
            data,
            fr,
            csv,
        } => commands::energy(&commands::EnergyArgs {
            arch,
            model,
            data,
            fr,
            csv,
        })
        .map(|_| true),
        Command::Gradcheck {
            config,
            seed,
            corrupt_surrogate,
            zero_weights,
        } => commands::gradcheck(&commands::GradcheckArgs {
            config,
            seed,
            corrupt_surrogate,
            zero_weights,
        }),
        Command::Gen { config, out } => commands::gen(&config, &out).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRNN_LOG", "error"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
