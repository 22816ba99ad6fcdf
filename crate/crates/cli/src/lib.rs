//! `geoadapt` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod plot;
pub mod settings;

pub use settings::load_config;

#[derive(Debug, Parser)]
#[command(
    name = "geoadapt",
    version,
    about = "Locatability scoring, curation, rewards, toy GRPO training and evaluation"
)]
pub struct Cli {
    /// Key-value config file; falls back to $GEOADAPT_CONFIG.
    #[arg(long, global = true, env = "GEOADAPT_CONFIG")]
    pub config: Option<PathBuf>,

    /// Overrides the `seed` config key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Skip and log malformed or invalid records instead of aborting.
    #[arg(long, global = true)]
    pub lenient: bool,

    /// Also write static SVG charts next to the outputs.
    #[arg(long, global = true)]
    pub plot: bool,

    /// Override any config key, e.g. `--set alpha=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Append rejected records (JSON lines) to this file as well as stderr.
    #[arg(long, global = true)]
    pub reject_log: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add l_base, l_gap, l_reason, l_opt and stratum to every dataset record.
    Score(IoArgs),
    /// Split a dataset into standard and RAG-superior files with a summary.
    Stratify(DirArgs),
    /// Stratify, then augment RAG-superior trajectories with validated implicit cues.
    Curate(DirArgs),
    /// Score generated answers with every reward term.
    Reward(RewardArgs),
    /// Run the two-stage curriculum on the synthetic world.
    TrainToy(TrainArgs),
    /// Distance-threshold and name accuracies of predictions.
    Eval(EvalArgs),
    /// Re-render a saved JSON metric report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Input JSON lines (defaults to `dataset_in`).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output file (defaults to `dataset_out`, else stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DirArgs {
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory (defaults to `dataset_out`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Grounding table (TSV or JSON lines; defaults to `grounding_table`).
    #[arg(long)]
    pub grounding: Option<PathBuf>,
    /// Alias table for name matching (defaults to `alias_table`).
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// One gazetteer term per line for entity extraction.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trace output (defaults to `trace_out`, else `trace.jsonl`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Final policy dump (defaults to `policy_out`, else `policy.txt`).
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON metric report written by `eval --format json`.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// Lenient run that skipped at least one record.
    Rejected(usize),
}

impl Outcome {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Outcome::Clean => ExitCode::SUCCESS,
            Outcome::Rejected(_) => ExitCode::from(2),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let config = load_config(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    commands::dispatch(cli, &config)
}

pub(crate) fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, contents).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}
