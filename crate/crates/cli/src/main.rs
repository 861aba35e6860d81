//! `rulesmith`: validate, render, merge and score trigger-action rules, run
//! the worker simulator and the rule engine, and serve live sessions.
//!
//! Exit status is 0 on success, 1 when a rule fails validation or an
//! evaluation falls short, and 2 for bad arguments or unreadable input.

mod commands;
mod engine_cmd;
mod input;
mod session_cmd;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rulesmith_core::catalog::Catalog;
use rulesmith_core::fixtures;

use crate::input::UsageError;

#[derive(Debug, Parser)]
#[command(name = "rulesmith", version, about = "Crowd-authored trigger-action rules", propagate_version = true)]
struct Cli {
    /// Catalog document; defaults to the built-in catalog.
    #[arg(long, global = true, env = "RULESMITH_CATALOG")]
    catalog: Option<PathBuf>,
    /// Fixture directory used to resolve bare model names.
    #[arg(long, global = true, env = "RULESMITH_FIXTURES")]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check rule documents, envelopes, rule lists or gold files.
    Validate(commands::ValidateArgs),
    /// Describe rules in plain English.
    Render(commands::RenderArgs),
    /// Decode a document and print it re-encoded.
    Roundtrip(commands::RoundtripArgs),
    /// Summarize or print the catalog.
    Catalog(commands::CatalogArgs),
    /// Merge the submissions of a session log by voting.
    Merge(commands::MergeArgs),
    /// Score rules against gold standards.
    Eval(commands::EvalArgs),
    /// Monte-Carlo experiment with simulated workers.
    Sim(commands::SimArgs),
    /// Print the snapshot feed a feed script produces.
    Feed(commands::FeedArgs),
    /// Run the rule engine over a snapshot feed.
    #[command(subcommand)]
    Engine(engine_cmd::EngineCommand),
    /// Replay session logs or run scripted sessions.
    #[command(subcommand)]
    Session(session_cmd::SessionCommand),
    /// Serve the HTTP and WebSocket API.
    Serve(commands::ServeArgs),
}

/// Settings shared by every subcommand.
pub struct Ctx {
    pub catalog: Catalog,
    pub catalog_path: Option<PathBuf>,
    pub fixtures: PathBuf,
    pub format: Format,
}

/// Whether a command's checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

impl Status {
    pub fn from_ok(ok: bool) -> Status {
        if ok {
            Status::Ok
        } else {
            Status::Failed
        }
    }
}

fn context(cli: &Cli) -> anyhow::Result<Ctx> {
    let catalog = match &cli.catalog {
        Some(path) => Catalog::from_path(path)
            .map_err(|e| UsageError::new(format!("cannot load catalog {}: {e}", path.display())))?,
        None => fixtures::default_catalog(),
    };
    Ok(Ctx {
        catalog,
        catalog_path: cli.catalog.clone(),
        fixtures: cli.fixtures.clone().unwrap_or_else(fixtures::root),
        format: cli.format,
    })
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let ctx = context(&cli).context("startup")?;
    match cli.command {
        Command::Validate(a) => commands::validate(&ctx, a),
        Command::Render(a) => commands::render(&ctx, a),
        Command::Roundtrip(a) => commands::roundtrip(&ctx, a),
        Command::Catalog(a) => commands::catalog(&ctx, a),
        Command::Merge(a) => commands::merge(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Sim(a) => commands::sim(&ctx, a),
        Command::Feed(a) => commands::feed(&ctx, a),
        Command::Engine(c) => engine_cmd::run(&ctx, c),
        Command::Session(c) => session_cmd::run(&ctx, c),
        Command::Serve(a) => commands::serve(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rulesmith: {e:#}");
            ExitCode::from(if e.chain().any(|c| c.is::<UsageError>()) { 2 } else { 1 })
        }
    }
}
