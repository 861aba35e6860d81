//! `rulesmith session`: rebuild sessions from their logs and run headless
//! sessions with scripted workers.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use chrono::Duration;
use clap::{Args, Subcommand};
use rulesmith_core::crowd::{run_crowd, CrowdError, CrowdOutcome, CrowdScript, ScriptRecruiter};
use rulesmith_core::rule::RuleEnvelope;
use rulesmith_core::session::{finalize_replayed, replay_file, FinalizeMode, SessionService, SessionView, SteppingClock};
use rulesmith_core::time::Timestamp;
use serde::Serialize;

use crate::commands::print_json;
use crate::input::{self, read, UsageError};
use crate::{Ctx, Format, Status};

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Rebuild a session from its log and optionally finalize the result.
    Replay(ReplayArgs),
    /// Run a session with scripted workers.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    log: PathBuf,
    /// Finalize by voting.
    #[arg(long, conflicts_with = "pick")]
    vote: bool,
    #[arg(long, default_value_t = 2, requires = "vote")]
    threshold: usize,
    /// Finalize with this candidate.
    #[arg(long)]
    pick: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Crowd script: the user's lines, the workers and how to finalize.
    #[arg(long)]
    script: PathBuf,
    /// Write the session log here.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Clock start; every event advances it by --step-secs.
    #[arg(long, value_parser = input::timestamp, default_value = "2018-01-01T08:00")]
    start: Timestamp,
    #[arg(long, default_value_t = 60)]
    step_secs: i64,
}

#[derive(Debug, Serialize)]
struct ReplayOutput {
    session: SessionView,
    #[serde(skip_serializing_if = "Option::is_none")]
    finalized: Option<RuleEnvelope>,
}

pub fn run(ctx: &Ctx, cmd: SessionCommand) -> Result<Status> {
    match cmd {
        SessionCommand::Replay(args) => replay(ctx, args),
        SessionCommand::Run(args) => run_script(ctx, args),
    }
}

fn replay(ctx: &Ctx, args: ReplayArgs) -> Result<Status> {
    if !args.log.is_file() {
        return Err(UsageError::new(format!("{} does not exist", args.log.display())));
    }
    let session = replay_file(&args.log, &ctx.catalog).map_err(|e| UsageError::new(e.to_string()))?;
    let mode = match (&args.pick, args.vote) {
        (Some(rule_id), _) => Some(FinalizeMode::UserPick { rule_id: rule_id.clone() }),
        (None, true) => Some(FinalizeMode::Voting { threshold: args.threshold }),
        (None, false) => None,
    };
    let finalized = match mode {
        None => None,
        Some(mode) => match finalize_replayed(&session, &mode, &ctx.catalog) {
            Ok(rule) => Some(RuleEnvelope::from_rule(&rule)),
            Err(e) => {
                eprintln!("rulesmith: {}: {e}", session.session_id);
                return Ok(Status::Failed);
            }
        },
    };
    let out = ReplayOutput { session: session.view(&ctx.catalog), finalized };
    match ctx.format {
        Format::Json => print_json(&out)?,
        Format::Table => print_view(&out.session, out.finalized.as_ref()),
    }
    Ok(Status::Ok)
}

fn print_view(view: &SessionView, finalized: Option<&RuleEnvelope>) {
    let state = serde_json::to_value(view.state).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    println!(
        "session {} ({state}), user {}, workers {}",
        view.session_id,
        view.user_id,
        view.workers.join(", ")
    );
    for m in &view.messages {
        let who = match &m.author {
            rulesmith_core::session::Author::User => "user".to_string(),
            rulesmith_core::session::Author::Worker(w) => w.clone(),
        };
        println!("  [{}] {who}: {}", m.at.format("%H:%M:%S"), m.text);
    }
    for c in &view.candidates {
        println!("  candidate {} by {}: {}", c.rule_id, c.worker_id, c.description);
    }
    if let Some(f) = &view.final_rule {
        println!("  final: {}", f.description);
    }
    if let Some(env) = finalized {
        println!("  finalized as {}", env.rule_id);
    }
}

#[derive(Debug, Serialize)]
struct RunOutput {
    outcome: CrowdOutcome,
    session: SessionView,
}

fn run_script(ctx: &Ctx, args: RunArgs) -> Result<Status> {
    let script = CrowdScript::from_json(&read(&args.script)?)
        .map_err(|e| UsageError::new(format!("{}: {e}", args.script.display())))?;
    let clock = Arc::new(SteppingClock::new(args.start, Duration::seconds(args.step_secs)));
    let mut service = SessionService::new(Arc::new(ctx.catalog.clone()), clock);
    if let Some(dir) = &args.log_dir {
        service = service.with_log_dir(dir)?;
    }
    let mut recruiter = ScriptRecruiter::new(&script.workers, &ctx.catalog);
    let outcome = match run_crowd(&service, &script, &mut recruiter) {
        Ok(o) => o,
        Err(e @ CrowdError::UnknownScenario { .. }) => return Err(UsageError::new(e.to_string())),
        Err(e) => {
            eprintln!("rulesmith: {e}");
            return Ok(Status::Failed);
        }
    };
    let session = service.view(&outcome.session_id)?;
    let ok = outcome.refused.is_empty();
    let out = RunOutput { outcome, session };
    match ctx.format {
        Format::Json => print_json(&out)?,
        Format::Table => {
            print_view(&out.session, None);
            for r in &out.outcome.refused {
                println!("  refused {}: {} ({})", r.worker_id, r.message, r.code);
            }
        }
    }
    Ok(Status::from_ok(ok))
}
