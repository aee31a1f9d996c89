//! `toolrl`: data generation, debug rollouts, toy training, evaluation,
//! reward conformance and search-cache maintenance.
//!
//! Exit codes: 0 success, 1 assertion or conformance failure, 2 usage or
//! configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::PolicyKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "toolrl", version, about = "Tool-augmented RL rollouts, rewards and toy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenTask {
    Calculator,
    FactLookup,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSONL.
    GenData {
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "calculator")]
        task: GenTask,
    },
    /// Roll out one item and print the transcript with tool output marked.
    Rollout {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        item_id: String,
        /// Use offline fixture search and the in-process interpreter.
        #[arg(long)]
        mock_tools: bool,
        #[arg(long)]
        no_color: bool,
        /// Append the trajectory as one JSON line to this file.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the toy policy; writes metrics.csv and checkpoints.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Continue from a checkpoint written under the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate pass@1 and tool usage per dataset.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mock_tools: bool,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Replay reward conformance vectors.
    Score { vectors: PathBuf },
    /// Inspect, clear or import the persistent search cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    /// Print the number of cached entries.
    Inspect {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Remove every entry.
    Clear {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Add entries from a persisted cache file.
    Import {
        #[arg(long)]
        cache: PathBuf,
        file: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { n, seed, out, task } => commands::gen_data(n, seed, &out, task),
        Command::Rollout { config, item_id, mock_tools, no_color, export, policy, seed } => {
            commands::rollout(commands::RolloutArgs {
                config,
                item_id,
                mock_tools,
                color: !no_color,
                export,
                policy,
                seed,
            })
        }
        Command::Train { config, steps, out_dir, resume } => commands::train(config, steps, out_dir, resume),
        Command::Eval { config, policy, checkpoint, mock_tools, json } => {
            commands::eval(config, policy, checkpoint, mock_tools, json)
        }
        Command::Score { vectors } => commands::score(&vectors),
        Command::Cache { action } => match action {
            CacheAction::Inspect { cache } => commands::cache_inspect(&cache),
            CacheAction::Clear { cache } => commands::cache_clear(&cache),
            CacheAction::Import { cache, file } => commands::cache_import(&cache, &file),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
