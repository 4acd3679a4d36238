//! `rnnlab` command line: reads a `key = value` config, applies flag
//! overrides, runs one experiment and writes CSV artifacts.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure
//! (divergence, singular system, failed gradient check).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<rnnlab::Error> for CliError {
    fn from(e: rnnlab::Error) -> Self {
        use rnnlab::Error as E;
        match e {
            E::Divergence { .. } | E::NonFinite(_) | E::Singular(_) => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rnnlab", version, about = "Recurrent network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// `key = value` run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Pass threshold; overrides `threshold`.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Family, group or `all`; overrides `family`.
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train one model on a synthetic task.
    Train,
    /// Finite-difference gradient check across model families.
    Gradcheck,
    /// Gradient-norm decay over a spectral-radius sweep.
    Gradflow,
    /// Echo state network with a ridge readout.
    Esn,
    /// Several families trained under one parameter budget.
    Compare,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    if let Some(out) = &cli.out {
        cfg.set("out", out.display());
    }
    if let Some(t) = cli.threshold {
        cfg.set("threshold", t);
    }
    if let Some(f) = &cli.family {
        cfg.set("family", f);
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = load(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Train => commands::cmd_train(&mut cfg),
        Command::Gradcheck => commands::cmd_gradcheck(&mut cfg),
        Command::Gradflow => commands::cmd_gradflow(&mut cfg),
        Command::Esn => commands::cmd_esn(&mut cfg),
        Command::Compare => commands::cmd_compare(&mut cfg),
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rnnlab: {e}");
            e.exit_code()
        }
    }
}
