//! `weldeval`: weld-image acceptability studies from the command line.
//!
//! Stages communicate through files in the output directory, so a run can
//! be resumed, audited, or rerun per stage. Exit codes: 0 on success, 1
//! when individual items failed (cells, images, or incomplete results), 2
//! for configuration and precondition errors.

mod commands;
mod config;
mod manifest;
mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;
use weldeval_core::dataset::ImageSource;
use weldeval_core::prompting::Strategy;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Items(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Items(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    #[value(name = "real_world", alias = "real-world")]
    RealWorld,
    #[value(name = "online")]
    Online,
}

impl From<SourceArg> for ImageSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::RealWorld => ImageSource::RealWorld,
            SourceArg::Online => ImageSource::Online,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    #[value(name = "zero-shot", alias = "zero_shot")]
    ZeroShot,
    #[value(name = "weldprompt")]
    WeldPrompt,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::ZeroShot => Strategy::ZeroShot,
            StrategyArg::WeldPrompt => Strategy::WeldPrompt,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "weldeval",
    version,
    about = "Weld acceptability classification pipeline"
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(short, long, global = true, default_value = "weldeval.toml")]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and every file it references.
    Validate,
    /// Print per-context class statistics (POS, NEG, imbalance ratio).
    Stats {
        #[arg(long)]
        source: Option<SourceArg>,
    },
    /// Compute image embeddings and write the embeddings artifact.
    Embed {
        #[arg(long)]
        source: Option<SourceArg>,
    },
    /// Classify every image in every context, R runs each.
    Run {
        #[arg(long)]
        strategy: StrategyArg,
        #[arg(long)]
        source: Option<SourceArg>,
    },
    /// Build the reference pool from zero-shot results.
    BuildPool {
        #[arg(long)]
        source: Option<SourceArg>,
    },
    /// Score a results file and write metrics artifacts.
    Evaluate {
        #[arg(long)]
        strategy: StrategyArg,
        #[arg(long)]
        source: Option<SourceArg>,
        /// Score this results file instead of the default location.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Print the text table for stored metrics.
    Report {
        #[arg(long)]
        strategy: StrategyArg,
        #[arg(long)]
        source: Option<SourceArg>,
    },
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let out = cli.output_dir.as_deref();
    match &cli.command {
        Command::Validate => commands::cmd_validate(&cli.config),
        Command::Stats { source } => {
            commands::cmd_stats(&cli.config, source.map(Into::into))
        }
        Command::Embed { source } => {
            commands::cmd_embed(&cli.config, source.map(Into::into), out)
        }
        Command::Run { strategy, source } => commands::cmd_run(
            &cli.config,
            (*strategy).into(),
            source.map(Into::into),
            out,
        ),
        Command::BuildPool { source } => {
            commands::cmd_build_pool(&cli.config, source.map(Into::into), out)
        }
        Command::Evaluate {
            strategy,
            source,
            results,
        } => commands::cmd_evaluate(
            &cli.config,
            (*strategy).into(),
            source.map(Into::into),
            results.as_deref(),
            out,
        ),
        Command::Report { strategy, source } => commands::cmd_report(
            &cli.config,
            (*strategy).into(),
            source.map(Into::into),
            out,
        ),
    }
}

fn main() {
    // Die quietly when a downstream pipe closes (e.g. `weldeval ... | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
