//! Command-line driver: dataset generation, training, evaluation, attention
//! analysis, theorem certificates and mean-rank tables.
//!
//! Every subcommand reads a JSON [`config::ExperimentConfig`] (optional),
//! applies `--key value` overrides with dotted keys, writes artifacts under
//! `out` and records a manifest `<out>/<subcommand>.manifest.json`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Failure categories, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    NonFinite(String),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Config(_) => 3,
            Self::NonFinite(_) => 4,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<lengen::Error> for CliError {
    fn from(e: lengen::Error) -> Self {
        match e {
            lengen::Error::NonFinite(msg) => Self::NonFinite(msg),
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "lengen", version, about = "Length-generalization laboratory for positional encodings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/validation/test splits.
    GenData(Common),
    /// Train one model per seed and evaluate it.
    Train(Common),
    /// Score a checkpoint on a generated or external split.
    Eval(Common),
    /// Compare attention patterns and attended distances across checkpoints.
    Analyze(Common),
    /// Check the NoPE weight constructions and write certificates.
    VerifyTheorems(Common),
    /// Mean rank of schemes across training reports.
    Rank(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (same as `--out` in the override list).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config overrides as `--key value`, e.g. `--train.model.scheme alibi`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

/// Runs the CLI on `args` (including the program name).
pub fn run_args<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string()));
        }
    };
    let (name, common) = match &cli.command {
        Command::GenData(c) => ("gen-data", c),
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::Analyze(c) => ("analyze", c),
        Command::VerifyTheorems(c) => ("verify-theorems", c),
        Command::Rank(c) => ("rank", c),
    };
    let mut overrides = Vec::new();
    if let Some(out) = &common.out {
        overrides.push(("out".to_string(), out.display().to_string()));
    }
    let mut config_file = common.config.clone();
    for (k, v) in config::parse_overrides(&common.overrides)? {
        if k == "config" {
            config_file = Some(PathBuf::from(v));
        } else {
            overrides.push((k, v));
        }
    }
    let resolved = config::resolve(config_file.as_deref(), overrides)?;
    commands::dispatch(name, &resolved)
}

/// Runs the CLI and maps the outcome to a process exit code, printing any
/// diagnostic to stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match run_args(args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprint!("{msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
