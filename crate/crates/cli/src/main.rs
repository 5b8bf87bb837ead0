//! `stylemirror`: ingest a speaker's corpus, transform sentences into their
//! style and evaluate the result.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 state-file format error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "stylemirror", version, about = "Mine a speaker's style and rewrite sentences in it")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = config::ENV_CONFIG)]
    pub config: Option<PathBuf>,
    /// Session state file (overrides the config).
    #[arg(long, global = true)]
    pub state: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose_log: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Append corpus files to the session and update the mined state.
    Ingest(IngestArgs),
    /// Rewrite sentences in the speaker's style.
    Transform(TransformArgs),
    /// Score outputs for perplexity and context similarity.
    Eval(EvalArgs),
    /// Save, load or inspect the session.
    #[command(subcommand)]
    State(StateCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// One sentence per line (default).
    #[arg(long, conflicts_with = "prose")]
    pub lines: bool,
    /// Free text split into sentences at terminal punctuation.
    #[arg(long)]
    pub prose: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["sentence", "file", "repl"])))]
pub struct TransformArgs {
    pub sentence: Option<String>,
    /// Transform every non-blank line of a file.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Read sentences from stdin until EOF.
    #[arg(long)]
    pub repl: bool,
    /// Print the selected pattern, scores and candidate table.
    #[arg(long)]
    pub verbose: bool,
    /// Override the configured chunking mode.
    #[arg(long)]
    pub chunk_mode: Option<stylemirror::ChunkMode>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["run", "outputs", "fractions"])))]
pub struct EvalArgs {
    /// Input sentences, one per line.
    #[arg(long)]
    pub inputs: PathBuf,
    /// Transform the inputs with the current session.
    #[arg(long)]
    pub run: bool,
    /// Precomputed outputs, line-aligned with the inputs.
    #[arg(long)]
    pub outputs: Option<PathBuf>,
    /// Re-mine corpus prefixes of these sizes, e.g. 0.05,0.1,0.2,1.
    #[arg(long, value_delimiter = ',', conflicts_with = "outputs")]
    pub fractions: Option<Vec<f64>>,
    /// Directory for the CSV and JSON reports.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StateCommand {
    /// Write a canonical copy of the session to a path.
    Save { path: PathBuf },
    /// Replace the session with a saved one.
    Load { path: PathBuf },
    /// Print frequent n-grams, border size and patterns.
    Show {
        /// Limit the number of n-grams and patterns listed.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<stylemirror::Error>() {
            return if e.is_state_format() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose_log {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_env("STYLEMIRROR_LOG")
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
