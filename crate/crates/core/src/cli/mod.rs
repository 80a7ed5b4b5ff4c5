//! Command-line front end of the `dresd` binary.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 bad or
//! unreadable input data, 3 a decoded output disagreed with plain decoding.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, StoreMode};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "dresd",
    version,
    about = "Speculative decoding with retrieved drafts"
)]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one config key, e.g. `--set shape.len=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic token corpus, or a perturbed copy of one.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        min_len: usize,
        #[arg(long, default_value_t = 60)]
        max_len: usize,
        /// Token ids are drawn from `[1, alphabet]`.
        #[arg(long, default_value_t = 8)]
        alphabet: u32,
        /// Perturb this corpus instead of drawing a fresh one.
        #[arg(long)]
        perturb: Option<PathBuf>,
        /// Per-token substitution probability used with `--perturb`.
        #[arg(long, default_value_t = 0.15)]
        rate: f64,
    },
    /// Fit the normalisation and PCA pipeline on datastore embeddings.
    FitPipeline,
    /// Build the dense datastore or the sparse suffix-array index.
    BuildStore,
    /// Decode every prompt speculatively.
    Generate {
        /// Prompt file; overrides `prompts` from the config.
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Also decode without drafts and fail if any output differs.
        #[arg(long)]
        oracle_check: bool,
    },
    /// Measure acceptance, model calls and throughput.
    Bench {
        #[arg(long, default_value_t = crate::eval::DEFAULT_REPETITIONS)]
        reps: usize,
    },
    /// Dense against sparse drafting on the same prompts and budget.
    Compare {
        #[arg(long, default_value_t = crate::eval::DEFAULT_REPETITIONS)]
        reps: usize,
    },
    /// Vary one of draft length, draft count or key size.
    Sweep {
        #[arg(long, default_value_t = crate::eval::DEFAULT_REPETITIONS)]
        reps: usize,
    },
    /// Retrieval quality of a dense datastore.
    Mrr {
        /// Search structure to query with.
        #[arg(long)]
        index: Option<String>,
    },
}

impl Error {
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 1,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Format { .. }
            | Error::Truncated { .. }
            | Error::Io(_) => 2,
            Error::OracleMismatch(_) => 3,
        }
    }
}

/// Merge the config file, `--set` overrides and the shorthand flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for item in &cli.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out", &out.to_string_lossy())?;
    }
    if let Command::Generate {
        prompts: Some(p), ..
    } = &cli.command
    {
        cfg.set("prompts", &p.to_string_lossy())?;
    }
    cfg.absolutize()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    commands::run(&cli.command, &cfg)
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
