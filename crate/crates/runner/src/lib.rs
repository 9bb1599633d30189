//! Configuration, orchestration and result emission for `rqw` experiments.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{FieldError, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Orbit-spectrum oracle against direct diagonalization (permutation coins).
    Spectrum,
    /// Position moments of the evolved state and their growth exponent.
    Transport,
    /// Fractional moments of the Green function and their decay fit.
    Green,
    /// Eigenfunction correlator and its decay fit.
    Correlator,
    /// Probability that the spectrum comes within η of z.
    Gap,
    /// Poisson reconstruction, second-moment and conditional-moment checks.
    Appendix,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Transport => "transport",
            Command::Green => "green",
            Command::Correlator => "correlator",
            Command::Gap => "gap",
            Command::Appendix => "appendix",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rqw", version, about = "Random coined quantum walk experiments")]
pub struct Cli {
    /// JSON experiment configuration (comments allowed).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output root; each run writes to `<out>/<subcommand>-<hash>`.
    #[arg(long, global = true, env = "RQW_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

pub const DEFAULT_OUT: &str = "runs";

/// Runs one subcommand and returns the run directory.
pub fn run(cli: &Cli) -> Result<PathBuf, RunError> {
    let started = output::unix_now();
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| RunError::config("--config", "a configuration file is required"))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads == Some(0) {
        return Err(RunError::config("--threads", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Io(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    let result = pool.install(|| match cli.command {
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Transport => commands::transport(&cfg),
        Command::Green => commands::green(&cfg),
        Command::Correlator => commands::correlator(&cfg),
        Command::Gap => commands::gap(&cfg),
        Command::Appendix => commands::appendix(&cfg),
    })?;
    let root: PathBuf = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| Path::new(DEFAULT_OUT).to_path_buf());
    let dir = output::run_dir(&root, cli.command.name(), &cfg);
    output::write_run(&dir, cli.command.name(), &cfg, threads, started, &result)?;
    match result.failure {
        Some(msg) => Err(RunError::Numerical(format!("{msg} (outputs in {})", dir.display()))),
        None => Ok(dir),
    }
}
