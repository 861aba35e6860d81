use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rulesmith_core::eval::{aggregate, load_gold_dir, score_rule, GroupBy, GroupRow, ScoreRow};
use rulesmith_core::fixtures;
use rulesmith_core::merge::{merge_rules, MergeConfig, MergeError, OwnerVote};
use rulesmith_core::render::{render_clause, render_rule};
use rulesmith_core::rule::{decode_document, encode_clause, encode_rule, ClauseKind, DecodeError, RuleEnvelope};
use rulesmith_core::session::{replay_file, voting_pool, SystemClock};
use rulesmith_core::sim::{builtin_script, run_experiment, synth_feed, ExperimentConfig, ExperimentReport, FeedScript, WorkerErrorModel};
use rulesmith_core::time::Timestamp;
use rulesmith_core::validator::{validate_clause, validate_rule, Issue};
use rulesmith_server::{AppState, ServerOptions};
use serde::Serialize;
use serde_json::Value;

use crate::input::{self, decode, read, read_json, rule_docs, shape, Decoded, Shape, UsageError};
use crate::table::{num, Table};
use crate::{Ctx, Format, Status};

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn now() -> Timestamp {
    chrono::Local::now().naive_local()
}

#[derive(Debug, Serialize)]
struct DecodeFailure {
    path: String,
    message: String,
}

impl From<DecodeError> for DecodeFailure {
    fn from(e: DecodeError) -> DecodeFailure {
        DecodeFailure { path: e.path.clone(), message: e.kind.to_string() }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Files or directories of documents.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Validation time; defaults to the gold file's, the envelope's, or now.
    #[arg(long, value_parser = input::timestamp)]
    at: Option<Timestamp>,
}

#[derive(Debug, Serialize)]
struct ValidateRow {
    source: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    at: Option<Timestamp>,
    issues: Vec<Issue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decode_error: Option<DecodeFailure>,
}

pub fn validate(ctx: &Ctx, args: ValidateArgs) -> Result<Status> {
    let mut rows = Vec::new();
    for path in &args.paths {
        for d in rule_docs(path)? {
            let row = match decode(&d.doc, &ctx.catalog) {
                Err(e) => ValidateRow { source: d.source, ok: false, at: None, issues: Vec::new(), decode_error: Some(e.into()) },
                Ok(decoded) => {
                    let envelope_at = match &decoded {
                        Decoded::Rule(r) if shape(&d.doc) == Shape::Envelope => Some(r.created_at),
                        _ => None,
                    };
                    let at = args.at.or(d.validate_at).or(envelope_at).unwrap_or_else(now);
                    let report = match &decoded {
                        Decoded::Rule(r) => validate_rule(r, &ctx.catalog, at),
                        Decoded::Clause(c) => validate_clause(c, &ctx.catalog, at),
                    };
                    ValidateRow { source: d.source, ok: report.ok, at: Some(at), issues: report.issues, decode_error: None }
                }
            };
            rows.push(row);
        }
    }
    let ok = rows.iter().all(|r| r.ok);
    match ctx.format {
        Format::Json => print_json(&rows)?,
        Format::Table => {
            for r in &rows {
                println!("{}: {}", r.source, if r.ok { "ok" } else { "invalid" });
                if let Some(e) = &r.decode_error {
                    println!("  error {}: {}", if e.path.is_empty() { "<root>" } else { &e.path }, e.message);
                }
                for i in &r.issues {
                    let sev = serde_json::to_value(i.severity)?;
                    println!("  {} {} [{}]: {}", sev.as_str().unwrap_or("?"), i.path, i.code, i.message);
                }
            }
        }
    }
    Ok(Status::from_ok(ok))
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ClauseText {
    side: &'static str,
    index: usize,
    text: String,
}

#[derive(Debug, Serialize)]
struct RenderRow {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    clauses: Vec<ClauseText>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decode_error: Option<DecodeFailure>,
}

pub fn render(ctx: &Ctx, args: RenderArgs) -> Result<Status> {
    let mut rows = Vec::new();
    for path in &args.paths {
        for d in rule_docs(path)? {
            rows.push(match decode(&d.doc, &ctx.catalog) {
                Ok(Decoded::Clause(c)) => {
                    let text = render_clause(&c, &ctx.catalog);
                    let side = if c.kind == ClauseKind::Sensor { "if" } else { "then" };
                    let clauses = vec![ClauseText { side, index: 0, text: text.clone() }];
                    RenderRow { source: d.source, description: Some(text), clauses, decode_error: None }
                }
                Ok(Decoded::Rule(rule)) => {
                    let mut clauses = Vec::new();
                    for (side, list) in [("if", &rule.ifs), ("then", &rule.thens)] {
                        for (index, c) in list.iter().enumerate() {
                            clauses.push(ClauseText { side, index, text: render_clause(c, &ctx.catalog) });
                        }
                    }
                    RenderRow { source: d.source, description: Some(render_rule(&rule, &ctx.catalog)), clauses, decode_error: None }
                }
                Err(e) => RenderRow { source: d.source, description: None, clauses: Vec::new(), decode_error: Some(e.into()) },
            });
        }
    }
    let ok = rows.iter().all(|r| r.decode_error.is_none());
    match ctx.format {
        Format::Json => print_json(&rows)?,
        Format::Table => {
            for r in &rows {
                match (&r.description, &r.decode_error) {
                    (Some(text), _) => println!("{}: {text}", r.source),
                    (None, Some(e)) => println!("{}: cannot decode {}: {}", r.source, e.path, e.message),
                    (None, None) => {}
                }
            }
        }
    }
    Ok(Status::from_ok(ok))
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    file: PathBuf,
}

/// Decodes every rule in the document and writes the document back with
/// each rule re-encoded. Always JSON.
pub fn roundtrip(ctx: &Ctx, args: RoundtripArgs) -> Result<Status> {
    let mut doc = read_json(&args.file)?;
    let encode = |v: &Value| -> Result<Value> {
        let decoded = decode(v, &ctx.catalog).with_context(|| format!("cannot decode {}", args.file.display()))?;
        Ok(match decoded {
            Decoded::Clause(c) => serde_json::to_value(encode_clause(&c))?,
            Decoded::Rule(rule) if shape(v) == Shape::Envelope => serde_json::to_value(RuleEnvelope::from_rule(&rule))?,
            Decoded::Rule(rule) => encode_rule(&rule).to_value(),
        })
    };
    let out = match shape(&doc) {
        Shape::Clause | Shape::Rule | Shape::Envelope => encode(&doc),
        Shape::List | Shape::Gold => {
            let key = if shape(&doc) == Shape::List { "rules" } else { "variants" };
            let items = doc[key].as_array_mut().ok_or_else(|| UsageError::new(format!("`{key}` must be an array")))?;
            for item in items.iter_mut() {
                *item = encode(item)?;
            }
            Ok(doc)
        }
    };
    match out {
        Ok(v) => {
            print_json(&v)?;
            Ok(Status::Ok)
        }
        Err(e) => {
            eprintln!("rulesmith: {e:#}");
            Ok(Status::Failed)
        }
    }
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Print the catalog document itself.
    #[arg(long)]
    document: bool,
}

#[derive(Debug, Serialize)]
struct OwnerCount {
    id: String,
    label: String,
    count: usize,
}

#[derive(Debug, Serialize)]
struct CatalogSummary {
    source: String,
    sensors: Vec<OwnerCount>,
    effectors: Vec<OwnerCount>,
    mean_triggers_per_sensor: f64,
}

pub fn catalog(ctx: &Ctx, args: CatalogArgs) -> Result<Status> {
    if args.document {
        println!("{}", ctx.catalog.to_json());
        return Ok(Status::Ok);
    }
    let summary = CatalogSummary {
        source: ctx.catalog_path.as_ref().map_or_else(|| "built-in".to_string(), |p| p.display().to_string()),
        sensors: ctx
            .catalog
            .sensors
            .iter()
            .map(|s| OwnerCount { id: s.id.clone(), label: s.label.clone(), count: s.triggers.len() })
            .collect(),
        effectors: ctx
            .catalog
            .effectors
            .iter()
            .map(|e| OwnerCount { id: e.id.clone(), label: e.label.clone(), count: e.actions.len() })
            .collect(),
        mean_triggers_per_sensor: ctx.catalog.mean_triggers_per_sensor(),
    };
    match ctx.format {
        Format::Json => print_json(&summary)?,
        Format::Table => {
            let mut t = Table::new(&["owner", "kind", "options"]);
            for s in &summary.sensors {
                t.row(vec![s.label.clone(), "sensor".into(), s.count.to_string()]);
            }
            for e in &summary.effectors {
                t.row(vec![e.label.clone(), "effector".into(), e.count.to_string()]);
            }
            print!("{}", t.render());
            println!("mean triggers per sensor: {:.2}", summary.mean_triggers_per_sensor);
        }
    }
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Session log (newline-delimited JSON).
    #[arg(long)]
    session: PathBuf,
    /// Owners need at least this many votes.
    #[arg(long, default_value_t = 2)]
    threshold: usize,
}

#[derive(Debug, Serialize)]
struct MergeOutput {
    session_id: String,
    workers: usize,
    threshold: usize,
    description: String,
    rule: rulesmith_core::rule::WireRule,
    owners: Vec<OwnerVote>,
}

pub fn merge(ctx: &Ctx, args: MergeArgs) -> Result<Status> {
    if !args.session.exists() {
        return Err(UsageError::new(format!("{} does not exist", args.session.display())));
    }
    let session = replay_file(&args.session, &ctx.catalog).map_err(|e| UsageError::new(e.to_string()))?;
    let cfg = MergeConfig { inclusion_threshold: args.threshold, ..MergeConfig::default() };
    let trace = match merge_rules(&voting_pool(&session), &cfg, &ctx.catalog) {
        Ok(t) => t,
        Err(e @ (MergeError::NoSubmissions | MergeError::EmptyFinalRule { .. })) => {
            eprintln!("rulesmith: {}: {e}", session.session_id);
            return Ok(Status::Failed);
        }
        Err(e) => return Err(e.into()),
    };
    let out = MergeOutput {
        session_id: session.session_id.clone(),
        workers: trace.workers,
        threshold: trace.threshold,
        description: render_rule(&trace.rule, &ctx.catalog),
        rule: encode_rule(&trace.rule),
        owners: trace.owners,
    };
    match ctx.format {
        Format::Json => print_json(&out)?,
        Format::Table => {
            println!("session {}: {} workers, threshold {}", out.session_id, out.workers, out.threshold);
            let mut t = Table::new(&["owner", "votes", "included", "condition"]);
            for o in &out.owners {
                t.row(vec![
                    o.owner_id.clone(),
                    o.votes.to_string(),
                    if o.included { "yes" } else { "no" }.into(),
                    o.chosen.clone().unwrap_or_default(),
                ]);
            }
            print!("{}", t.render());
            println!("{}", out.description);
        }
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grouping {
    Condition,
    Difficulty,
    Scenario,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Rule files or directories.
    #[arg(long, required = true)]
    rules: Vec<PathBuf>,
    /// Directory of gold-standard files.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value_t = Grouping::Difficulty)]
    group: Grouping,
    /// Condition label for rules whose file does not name one.
    #[arg(long, default_value = "rules")]
    condition: String,
    /// Also list the score of every rule.
    #[arg(long)]
    rows: bool,
    /// Fail unless every rule is perfect.
    #[arg(long)]
    require_perfect: bool,
}

#[derive(Debug, Serialize)]
struct EvalFailure {
    source: String,
    reason: String,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    group_by: GroupBy,
    groups: Vec<GroupRow>,
    rows: Vec<ScoredRule>,
    failures: Vec<EvalFailure>,
}

#[derive(Debug, Serialize)]
struct ScoredRule {
    source: String,
    #[serde(flatten)]
    score: ScoreRow,
}

pub fn eval(ctx: &Ctx, args: EvalArgs) -> Result<Status> {
    if !args.gold.is_dir() {
        return Err(UsageError::new(format!("{} is not a directory", args.gold.display())));
    }
    let golds = load_gold_dir(&args.gold, &ctx.catalog).map_err(|e| UsageError::new(e.to_string()))?;
    let by_id: BTreeMap<&str, _> = golds.iter().map(|g| (g.scenario_id.as_str(), g)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for path in &args.rules {
        for d in rule_docs(path)? {
            let gold = d.scenario.as_deref().and_then(|s| by_id.get(s));
            let Some(gold) = gold else {
                let reason = format!("no gold standard for scenario {}", d.scenario.as_deref().unwrap_or("?"));
                failures.push(EvalFailure { source: d.source, reason });
                continue;
            };
            match decode_document(&d.doc, &ctx.catalog) {
                Ok(rule) => {
                    let condition = d.condition.as_deref().unwrap_or(&args.condition);
                    rows.push(ScoredRule { source: d.source, score: score_rule(&rule, gold, &ctx.catalog, condition) });
                }
                Err(e) => failures.push(EvalFailure { source: d.source, reason: e.to_string() }),
            }
        }
    }
    let group_by = match args.group {
        Grouping::Condition => GroupBy::Condition,
        Grouping::Difficulty => GroupBy::Difficulty,
        Grouping::Scenario => GroupBy::Scenario,
    };
    let scores: Vec<ScoreRow> = rows.iter().map(|r| r.score.clone()).collect();
    let out = EvalOutput { group_by, groups: aggregate(&scores, group_by), rows, failures };
    let ok = out.failures.is_empty() && !(args.require_perfect && out.rows.iter().any(|r| !r.score.perfect));
    match ctx.format {
        Format::Json => print_json(&out)?,
        Format::Table => {
            print!("{}", group_table(&out.groups).render());
            if args.rows {
                let mut t = Table::new(&["rule", "scenario", "variant", "avg F1", "avg acc", "perfect"]);
                for r in &out.rows {
                    let s = &r.score;
                    t.row(vec![
                        r.source.clone(),
                        s.scenario_id.clone(),
                        s.variant.to_string(),
                        num(s.avg_f1),
                        num(s.avg_attr_accuracy),
                        if s.perfect { "yes" } else { "no" }.into(),
                    ]);
                }
                println!();
                print!("{}", t.render());
            }
            for f in &out.failures {
                println!("{}: {}", f.source, f.reason);
            }
        }
    }
    Ok(Status::from_ok(ok))
}

fn group_table(groups: &[GroupRow]) -> Table {
    let mut t = Table::new(&[
        "group", "rules", "IF P", "IF R", "IF F1", "THEN P", "THEN R", "THEN F1", "avg F1", "IF acc", "THEN acc", "avg acc",
        "perfect",
    ]);
    for g in groups {
        t.row(vec![
            g.group.clone(),
            g.rules.to_string(),
            num(g.if_precision),
            num(g.if_recall),
            num(g.if_f1),
            num(g.then_precision),
            num(g.then_recall),
            num(g.then_f1),
            num(g.avg_f1),
            num(g.if_attr_accuracy),
            num(g.then_attr_accuracy),
            num(g.avg_attr_accuracy),
            num(g.perfect_rate),
        ]);
    }
    t
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario id, or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    #[arg(long, default_value_t = 10)]
    workers: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Overrides the model's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker error model: a path, or a name under the fixture `models/`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    threshold: usize,
    /// Where the machine-readable report goes.
    #[arg(long, default_value = "sim-report.json")]
    out: PathBuf,
}

fn load_model(ctx: &Ctx, name: Option<&Path>) -> Result<WorkerErrorModel> {
    let Some(name) = name else {
        return Ok(WorkerErrorModel::from_json(fixtures::DEFAULT_MODEL)?);
    };
    let candidates = [name.to_path_buf(), ctx.fixtures.join("models").join(name)];
    match candidates.iter().find(|p| p.is_file()) {
        Some(p) => WorkerErrorModel::from_json(&read(p)?).map_err(|e| UsageError::new(format!("{}: {e}", p.display()))),
        None if name == Path::new("default.json") => Ok(WorkerErrorModel::from_json(fixtures::DEFAULT_MODEL)?),
        None => Err(UsageError::new(format!("no model file {}", name.display()))),
    }
}

pub fn sim(ctx: &Ctx, args: SimArgs) -> Result<Status> {
    let mut model = load_model(ctx, args.model.as_deref())?;
    if let Some(seed) = args.seed {
        model.seed = seed;
    }
    model.check().map_err(|e| UsageError::new(e.to_string()))?;
    if args.workers == 0 || args.trials == 0 {
        return Err(UsageError::new("--workers and --trials must be at least 1"));
    }
    let all = rulesmith_core::eval::shipped_gold(&ctx.catalog);
    let golds: Vec<_> = if args.scenario.eq_ignore_ascii_case("all") {
        all
    } else {
        let wanted: Vec<String> = args.scenario.split(',').map(|s| s.trim().to_ascii_uppercase()).collect();
        for w in &wanted {
            if !all.iter().any(|g| &g.scenario_id == w) {
                return Err(UsageError::new(format!("unknown scenario `{w}`")));
            }
        }
        all.into_iter().filter(|g| wanted.contains(&g.scenario_id)).collect()
    };
    let cfg = ExperimentConfig { n_workers: args.workers, trials: args.trials, threshold: args.threshold };
    let report = run_experiment(&golds, &model, &cfg, &ctx.catalog)?;
    write_json(&args.out, &report)?;
    match ctx.format {
        Format::Json => print_json(&report)?,
        Format::Table => print!("{}", sim_table(&report)),
    }
    Ok(Status::Ok)
}

fn sim_table(report: &ExperimentReport) -> String {
    let mut t = Table::new(&["scenario", "condition", "IF P", "IF R", "IF F1", "THEN P", "THEN R", "THEN F1", "avg F1", "avg acc"]);
    for s in &report.scenarios {
        for g in &s.conditions {
            t.row(vec![
                s.scenario_id.clone(),
                g.group.clone(),
                num(g.if_precision),
                num(g.if_recall),
                num(g.if_f1),
                num(g.then_precision),
                num(g.then_recall),
                num(g.then_f1),
                num(g.avg_f1),
                num(g.avg_attr_accuracy),
            ]);
        }
    }
    let c = &report.config;
    format!(
        "{} workers, {} trials, threshold {}, seed {}\n{}",
        c.n_workers,
        c.trials,
        c.threshold,
        report.model.seed,
        t.render()
    )
}

#[derive(Debug, Args)]
pub struct FeedArgs {
    /// Built-in script of a scenario.
    #[arg(long, conflicts_with = "script", required_unless_present = "script")]
    scenario: Option<String>,
    /// Feed script file.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Write the feed here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn feed(ctx: &Ctx, args: FeedArgs) -> Result<Status> {
    let script = match (&args.scenario, &args.script) {
        (Some(id), _) => builtin_script(&id.to_ascii_uppercase()).ok_or_else(|| UsageError::new(format!("unknown scenario `{id}`")))?,
        (None, Some(path)) => FeedScript::from_json(&read(path)?).map_err(|e| UsageError::new(format!("{}: {e}", path.display())))?,
        (None, None) => unreachable!("clap requires one"),
    };
    let snapshots = synth_feed(&script, &ctx.catalog)?;
    let mut text = String::new();
    for s in &snapshots {
        text.push_str(&serde_json::to_string(s)?);
        text.push('\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Keep session logs here and restore them on start.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Deliver finalized rules to an engine.
    #[arg(long)]
    engine: bool,
    /// Engine knowledge-base file (implies --engine).
    #[arg(long)]
    store: Option<PathBuf>,
    /// Engine outbox file (implies --engine).
    #[arg(long)]
    outbox: Option<PathBuf>,
}

pub fn serve(ctx: Ctx, args: ServeArgs) -> Result<Status> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let options = ServerOptions { log_dir: args.log_dir, engine: args.engine, engine_store: args.store, outbox: args.outbox };
    let state = AppState::new(ctx.catalog, Arc::new(SystemClock), &options)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| UsageError::new(format!("cannot listen on {}:{}: {e}", args.host, args.port)))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        tokio::select! {
            served = rulesmith_server::serve(listener, state) => served?,
            _ = tokio::signal::ctrl_c() => {}
        }
        Ok(Status::Ok)
    })
}
