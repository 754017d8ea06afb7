//! End-to-end experiments over the `readinfo` toolkit.
//!
//! Verbs: `render` (held-out test bitmaps + manifest), `estimate` (MI, IG and
//! accuracy per condition), `simulate` (reading traces and synthetic reading
//! times), `fit` (OLS and smoother over reading records), `report`
//! (consolidated summary). Exit codes: 0 success, 2 config error, 3 data
//! error, 4 numerical error.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod records;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{Context, FitArgs};
use crate::config::Loaded;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "readinfo", version, about = "Visual information and reading-time experiments")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Replace every seed in the config with values derived from this one.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render held-out test bitmaps for every word, condition and variant.
    Render,
    /// Estimate H(W), H(W|O), MI and accuracy per condition from the cache.
    Estimate {
        /// Compare test images only against each other.
        #[arg(long)]
        testset_only: bool,
    },
    /// Simulate reading traces and synthesize reading times.
    Simulate,
    /// Fit the IG → reading-time models.
    Fit {
        /// Reading-record CSV (default: <out>/simulate/records.csv).
        #[arg(long)]
        records: Option<PathBuf>,
        /// Comma-separated predictors: ig, condition, log_freq, length, surprisal, contextual_entropy.
        #[arg(long, value_delimiter = ',')]
        predictors: Vec<String>,
        #[arg(long)]
        no_smooth: bool,
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Aggregate estimates, simulations and fits into report/summary.json.
    Report,
}

/// Runs one command; returns a one-line status message.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let pool = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be >= 1".into())),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        None => None,
    };
    let loaded = match &cli.config {
        Some(p) => Some(Loaded::from_path(p, cli.seed_override)?),
        None => None,
    };
    let out = match (&cli.out, &loaded) {
        (Some(o), _) => o.clone(),
        (None, Some(l)) => match &l.config.output_dir {
            Some(d) if d.is_absolute() => d.clone(),
            Some(d) => l.path.parent().unwrap_or(std::path::Path::new(".")).join(d),
            None => return Err(CliError::Config("no output directory: pass --out or set output_dir".into())),
        },
        (None, None) => return Err(CliError::Config("pass --out <dir> or --config <path>".into())),
    };
    let ctx = Context { loaded, out };
    let go = || match cli.command {
        Command::Render => commands::render(&ctx),
        Command::Estimate { testset_only } => commands::estimate(&ctx, testset_only),
        Command::Simulate => commands::simulate(&ctx),
        Command::Fit {
            records,
            predictors,
            no_smooth,
            bandwidth,
            resamples,
        } => commands::fit(
            &ctx,
            &FitArgs {
                records,
                predictors,
                no_smooth,
                bandwidth,
                resamples,
            },
        ),
        Command::Report => commands::report(&ctx),
    };
    match pool {
        Some(p) => p.install(go),
        None => go(),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("readinfo: {e}");
            e.exit_code()
        }
    }
}
