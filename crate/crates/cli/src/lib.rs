//! The `mtsvm` command-line tool.
//!
//! Every command reads one TOML file (or plain data files for `predict`),
//! writes its main output to `--out` (or the config's `out` key, or standard
//! output), logs to standard error and ends with a single machine-readable
//! line starting with `RESULT `.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
//! failure (solver non-convergence or failed study checks).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mtsvm",
    version,
    about = "Multi-task SVM training, evaluation and studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from a sampling spec and write it as CSV.
    Generate {
        /// TOML file with `n`, optional `out` and a `[spec]` table.
        #[arg(long)]
        config: PathBuf,
        /// Override the spec's sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path (default: the config's `out`, else standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a CSV dataset and write the model file.
    Train {
        /// TOML file with `data`, `lambda1`, `lambda2`, `sigma` and an optional `[solver]` table.
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV to train on instead of the config's `data`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Override the solver's shuffle seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Model output path (default: the config's `out`, else standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every row of a CSV dataset with a trained model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// CSV dataset to score.
        #[arg(long)]
        data: PathBuf,
        /// Predictions CSV path `task,score,label` (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the risks of a trained model under a sampling spec.
    Evaluate {
        /// TOML file with `n_mc`, `seed` and a `[spec]` table.
        #[arg(long)]
        config: PathBuf,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Override the Monte-Carlo seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-task risk CSV path (default: the config's `out`, else standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a study and write its report; exits 0 only if every check passes.
    Study {
        /// One of convergence, interaction, frequency, equivalence.
        name: String,
        /// TOML study configuration.
        #[arg(long)]
        config: PathBuf,
        /// Replace the seed list by `seed, seed+1, ...` of the same length.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path (default: the config's `out`, else standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Worker threads (default: number of available processors).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!(
                "RESULT status=error code={} message={:?}",
                e.code(),
                e.to_string()
            );
            e.code()
        }
    }
}
