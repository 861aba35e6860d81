//! `rulesmith engine`: add rules, replay a snapshot feed, inspect and
//! resolve conflict findings. State persists between invocations through
//! `--store`; dispatched requests are appended to `--out`.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use rulesmith_core::engine::{
    parse_feed, ActionRequest, ConflictFinding, Engine, EngineConfig, EngineError, OutboxFile, RuleStatus,
    SensorSnapshot, UserDecision,
};
use rulesmith_core::rule::decode_document;
use rulesmith_core::time::Timestamp;
use rulesmith_core::validator::Issue;
use serde::Serialize;

use crate::commands::print_json;
use crate::input::{self, read, rule_docs, UsageError};
use crate::table::Table;
use crate::{Ctx, Format, Status};

#[derive(Debug, Subcommand)]
pub enum EngineCommand {
    /// Add rules, then apply every snapshot of a feed in order.
    Run(RunArgs),
    /// Answer a conflict finding.
    Resolve(ResolveArgs),
    /// Show the stored rules and findings.
    State(StateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Rule files or directories; a gold file contributes its primary variant.
    #[arg(long)]
    rules: Vec<PathBuf>,
    /// Snapshot feed (newline-delimited JSON).
    #[arg(long)]
    feed: Option<PathBuf>,
    /// Outbox the dispatched requests are appended to.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Engine state file, read if present and rewritten after every change.
    #[arg(long)]
    store: Option<PathBuf>,
    /// When the rules are added; defaults to the store's last snapshot time,
    /// then the first snapshot's time.
    #[arg(long, value_parser = input::timestamp)]
    at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Decision {
    ConfirmSubsume,
    Keep,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    finding: String,
    #[arg(long, value_enum)]
    decision: Decision,
}

#[derive(Debug, Args)]
pub struct StateArgs {
    #[arg(long)]
    store: PathBuf,
}

#[derive(Debug, Serialize)]
struct Added {
    source: String,
    rule_id: String,
}

#[derive(Debug, Serialize)]
struct Rejected {
    source: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    issues: Vec<Issue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct RuleLine {
    rule_id: String,
    status: RuleStatus,
    activations: u64,
}

#[derive(Debug, Serialize)]
struct RunReport {
    added: Vec<Added>,
    rejected: Vec<Rejected>,
    snapshots: usize,
    emitted: Vec<ActionRequest>,
    dispatched: usize,
    rules: Vec<RuleLine>,
    findings: Vec<ConflictFinding>,
}

fn engine(ctx: &Ctx, store: Option<&PathBuf>, out: Option<&PathBuf>) -> Result<Engine> {
    let mut engine = Engine::new(ctx.catalog.clone(), EngineConfig::default());
    if let Some(store) = store {
        engine = engine.with_store(store).map_err(|e| match e {
            EngineError::Corrupt { .. } => UsageError::new(e.to_string()),
            other => other.into(),
        })?;
    }
    if let Some(out) = out {
        let outbox = OutboxFile::open(out).with_context(|| format!("cannot open outbox {}", out.display()))?;
        engine = engine.with_dispatcher(Box::new(outbox));
    }
    Ok(engine)
}

fn rule_lines(engine: &Engine) -> Vec<RuleLine> {
    engine
        .kb()
        .rules
        .iter()
        .map(|(id, r)| RuleLine { rule_id: id.0.clone(), status: r.status, activations: r.activations })
        .collect()
}

pub fn run(ctx: &Ctx, cmd: EngineCommand) -> Result<Status> {
    match cmd {
        EngineCommand::Run(args) => run_feed(ctx, args),
        EngineCommand::Resolve(args) => resolve(ctx, args),
        EngineCommand::State(args) => state(ctx, args),
    }
}

fn run_feed(ctx: &Ctx, args: RunArgs) -> Result<Status> {
    if args.rules.is_empty() && args.store.is_none() {
        return Err(UsageError::new("nothing to run: give --rules or --store"));
    }
    let snapshots: Vec<SensorSnapshot> = match &args.feed {
        Some(path) => parse_feed(&read(path)?).map_err(|e| UsageError::new(format!("{}: {e}", path.display())))?,
        None => Vec::new(),
    };
    let mut engine = engine(ctx, args.store.as_ref(), args.out.as_ref())?;
    let at = args
        .at
        .or(engine.state().last_at)
        .or(snapshots.first().map(|s| s.at))
        .unwrap_or_else(|| chrono::Local::now().naive_local());

    let mut report = RunReport {
        added: Vec::new(),
        rejected: Vec::new(),
        snapshots: snapshots.len(),
        emitted: Vec::new(),
        dispatched: 0,
        rules: Vec::new(),
        findings: Vec::new(),
    };
    for path in &args.rules {
        for d in rule_docs(path)?.into_iter().filter(|d| d.variant.unwrap_or(0) == 0) {
            let rule = match decode_document(&d.doc, &ctx.catalog) {
                Ok(r) => r,
                Err(e) => {
                    report.rejected.push(Rejected { source: d.source, issues: Vec::new(), error: Some(e.to_string()) });
                    continue;
                }
            };
            match engine.add_rule(rule, at) {
                Ok(outcome) => {
                    report.emitted.extend(outcome.tick.emitted);
                    report.dispatched += outcome.tick.dispatched.len();
                    report.added.push(Added { source: d.source, rule_id: outcome.rule_id.0 });
                }
                Err(EngineError::Rejected(r)) => report.rejected.push(Rejected { source: d.source, issues: r.issues, error: None }),
                Err(e) => return Err(e.into()),
            }
        }
    }
    for s in &snapshots {
        let tick = engine.tick(s).map_err(|e| match e {
            EngineError::TimeWentBackwards { .. } => UsageError::new(e.to_string()),
            other => other.into(),
        })?;
        report.emitted.extend(tick.emitted);
        report.dispatched += tick.dispatched.len();
    }
    report.rules = rule_lines(&engine);
    report.findings = engine.kb().findings.clone();

    match ctx.format {
        Format::Json => print_json(&report)?,
        Format::Table => {
            for a in &report.added {
                println!("added {} from {}", a.rule_id, a.source);
            }
            for r in &report.rejected {
                println!("rejected {}: {}", r.source, r.error.clone().unwrap_or_else(|| issue_summary(&r.issues)));
            }
            println!(
                "{} snapshots, {} requests emitted, {} dispatched",
                report.snapshots,
                report.emitted.len(),
                report.dispatched
            );
            print_state(&report.rules, &report.findings);
        }
    }
    Ok(Status::from_ok(report.rejected.is_empty()))
}

fn issue_summary(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("{}: {}", i.path, i.message)).collect::<Vec<_>>().join("; ")
}

fn print_state(rules: &[RuleLine], findings: &[ConflictFinding]) {
    let mut t = Table::new(&["rule", "status", "activations"]);
    for r in rules {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        t.row(vec![r.rule_id.clone(), status, r.activations.to_string()]);
    }
    print!("{}", t.render());
    if !findings.is_empty() {
        let mut t = Table::new(&["finding", "kind", "rule a", "rule b", "resolution"]);
        for f in findings {
            let word = |v: serde_json::Result<serde_json::Value>| v.ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            t.row(vec![
                f.id.clone(),
                word(serde_json::to_value(f.kind)),
                f.rule_a.0.clone(),
                f.rule_b.as_ref().map(|r| r.0.clone()).unwrap_or_default(),
                word(serde_json::to_value(f.resolution)),
            ]);
        }
        print!("{}", t.render());
    }
}

fn resolve(ctx: &Ctx, args: ResolveArgs) -> Result<Status> {
    if !args.store.is_file() {
        return Err(UsageError::new(format!("{} does not exist", args.store.display())));
    }
    let mut engine = engine(ctx, Some(&args.store), None)?;
    let decision = match args.decision {
        Decision::ConfirmSubsume => UserDecision::ConfirmSubsume,
        Decision::Keep => UserDecision::Keep,
    };
    let finding = match engine.resolve_conflict(&args.finding, decision) {
        Ok(f) => f,
        Err(e @ EngineError::UnknownFinding(_)) => return Err(UsageError::new(e.to_string())),
        Err(e @ EngineError::AlreadyResolved(_)) => {
            eprintln!("rulesmith: {e}");
            return Ok(Status::Failed);
        }
        Err(e) => return Err(e.into()),
    };
    match ctx.format {
        Format::Json => print_json(&finding)?,
        Format::Table => print_state(&rule_lines(&engine), std::slice::from_ref(&finding)),
    }
    Ok(Status::Ok)
}

fn state(ctx: &Ctx, args: StateArgs) -> Result<Status> {
    if !args.store.is_file() {
        return Err(UsageError::new(format!("{} does not exist", args.store.display())));
    }
    let engine = engine(ctx, Some(&args.store), None)?;
    match ctx.format {
        Format::Json => print_json(engine.state())?,
        Format::Table => print_state(&rule_lines(&engine), &engine.kb().findings),
    }
    Ok(Status::Ok)
}
