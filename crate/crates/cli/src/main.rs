//! `rwpnn`: train, apply and benchmark the RWPNN anomaly detector.
//!
//! Exit codes:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 1    | any other failure                         |
//! | 2    | I/O error or missing path                 |
//! | 3    | training diverged (non-finite loss)       |
//! | 64   | command-line usage error                  |
//! | 65   | invalid configuration or malformed data   |

mod benchmark;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

/// Configuration rejected before any work is done.
#[derive(Debug)]
pub enum ConfigError {
    Config(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Config(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Parser)]
#[command(name = "rwpnn", version, about = "Recurrent wavelet probabilistic neural network anomaly detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sine / noise-burst corpus as CSV.
    Synth {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// JSON corpus settings; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split, train and select the view and threshold; writes the model directory.
    Train {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Model directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify every window of a CSV file with a trained model.
    Detect {
        #[command(flatten)]
        input: ModelInput,
        /// Add Gaussian drift (fraction 0.3, mean 0.3, variance 0.2) before scoring.
        #[arg(long)]
        drift: bool,
        /// Seed of the drift noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep a hyperparameter grid with repeated runs per cell.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// JSON grid of hyperparameter axes.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Repeats per cell; overrides `repeats` in the config.
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rolling-delta early warning over per-timestep latent densities.
    Earlywarn {
        #[command(flatten)]
        input: ModelInput,
        /// Rolling-mean window.
        #[arg(short = 's', long = "window", default_value_t = 5)]
        window: usize,
        /// Alert threshold on the rolling delta; defaults to the fitted value.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Emit plot data: per-window scores and a density histogram by class.
    Plot {
        #[command(flatten)]
        input: ModelInput,
        /// Histogram bins over log-density.
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
}

#[derive(Debug, Args)]
struct ModelInput {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// CSV windows to score, in the layout the model was trained on.
    #[arg(long)]
    data: PathBuf,
    /// Output directory; defaults to the current directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { out, config, seed } => commands::synth(&out, config.as_deref(), seed),
        Command::Train { config, out, seed } => commands::train(&config, out, seed),
        Command::Detect { input, drift, seed } => commands::detect(&input.model, &input.data, &input.out, drift, seed),
        Command::Benchmark {
            config,
            grid,
            out,
            repeats,
            seed,
        } => benchmark::run(&config, &grid, out, repeats, seed),
        Command::Earlywarn { input, window, delta } => {
            commands::earlywarn(&input.model, &input.data, &input.out, window, delta)
        }
        Command::Plot { input, bins } => commands::plot(&input.model, &input.data, &input.out, bins),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rwpnn::Error>() {
            return match e {
                rwpnn::Error::Io { .. } => EXIT_IO,
                rwpnn::Error::Divergence { .. } => EXIT_DIVERGED,
                _ => EXIT_DATA,
            };
        }
        if cause.is::<ConfigError>() {
            return EXIT_DATA;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let io = anyhow::Error::new(std::io::Error::from(std::io::ErrorKind::NotFound)).context("reading x");
        assert_eq!(exit_code(&io), EXIT_IO);
        let diverged = anyhow::Error::new(rwpnn::Error::Divergence { epoch: 3 });
        assert_eq!(exit_code(&diverged), EXIT_DIVERGED);
        let config = anyhow::Error::new(ConfigError::Config("x".into()));
        assert_eq!(exit_code(&config), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_FAILURE);
    }

    #[test]
    fn command_line_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
