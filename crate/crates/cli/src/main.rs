//! `promoguard` command-line entry point.
//!
//! Results go to stdout, diagnostics to stderr (`RUST_LOG` controls the
//! level). Exit codes are listed in [`exit`].

mod commands;
mod config;
mod exit;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::exit::{config_error, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "promoguard",
    version,
    about = "In-context learning toolkit for illicit promotion detection"
)]
struct Cli {
    /// Configuration file (endpoints, embedders, datasets, prompts).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build balanced train/test datasets from labeled JSONL corpora.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Inspect rendered prompts.
    #[command(subcommand)]
    Prompt(PromptCmd),
    /// Classify one text or a file of texts.
    Classify(commands::classify::ClassifyArgs),
    /// Run an evaluation protocol.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Open-world category discovery.
    #[command(subcommand)]
    Discover(DiscoverCmd),
    /// Summarize a directory of reports as Markdown and CSV.
    Report(commands::report::ReportArgs),
}

#[derive(Debug, Subcommand)]
enum DatasetCmd {
    Build(commands::dataset::BuildArgs),
}

#[derive(Debug, Subcommand)]
enum PromptCmd {
    /// Print the exact prompt sent for one query.
    Render(commands::prompt::RenderArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    /// Plain classification of the test split.
    Run(commands::eval::RunArgs),
    /// Shot-count sweep.
    Sweep(commands::eval::SweepArgs),
    /// F1 spread over demonstration orders.
    Order(commands::eval::OrderArgs),
    /// Grouped label placement (binary).
    LabelPos(commands::eval::LabelPosArgs),
    /// Exact-match needle among irrelevant demonstrations.
    Needle(commands::eval::NeedleArgs),
    /// One category withheld from the demonstrations.
    Unseen(commands::eval::UnseenArgs),
}

#[derive(Debug, Subcommand)]
enum DiscoverCmd {
    /// Stage one: a free-form category name per text.
    Annotate(commands::discover::AnnotateArgs),
    /// Stage two: group names into clusters.
    Consolidate(commands::discover::ConsolidateArgs),
    /// Mark clusters as known or novel.
    Diff(commands::discover::DiffArgs),
}

/// Flags shared by commands that talk to a model.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Endpoint name from the config file.
    #[arg(long)]
    pub endpoint: String,
    /// Bypass the response and embedding caches.
    #[arg(long)]
    pub no_cache: bool,
}

pub fn load_config(path: Option<&PathBuf>) -> CliResult<Config> {
    let path = path.ok_or_else(|| config_error("this command needs --config <FILE>"))?;
    Config::load(path)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.as_ref();
    match cli.command {
        Command::Dataset(DatasetCmd::Build(a)) => commands::dataset::build(a),
        Command::Prompt(PromptCmd::Render(a)) => commands::prompt::render(cfg, a),
        Command::Classify(a) => commands::classify::classify(cfg, a),
        Command::Eval(cmd) => {
            let config = load_config(cfg)?;
            match cmd {
                EvalCmd::Run(a) => commands::eval::run(&config, cfg, a),
                EvalCmd::Sweep(a) => commands::eval::sweep(&config, cfg, a),
                EvalCmd::Order(a) => commands::eval::order(&config, cfg, a),
                EvalCmd::LabelPos(a) => commands::eval::label_pos(&config, cfg, a),
                EvalCmd::Needle(a) => commands::eval::needle(&config, cfg, a),
                EvalCmd::Unseen(a) => commands::eval::unseen(&config, cfg, a),
            }
        }
        Command::Discover(cmd) => match cmd {
            DiscoverCmd::Annotate(a) => commands::discover::annotate(cfg, a),
            DiscoverCmd::Consolidate(a) => commands::discover::consolidate(cfg, a),
            DiscoverCmd::Diff(a) => commands::discover::diff(a),
        },
        Command::Report(a) => commands::report::report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
