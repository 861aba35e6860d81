//! Desk-scale experiments: noisy simulated workers for the merge/eval
//! pipeline, and scripted snapshot feeds for the engine.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the model seed,
//! the scenario index and the trial index, so reports are reproducible
//! byte for byte.

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, InputType};
use crate::engine::{Readings, SensorSnapshot};
use crate::eval::{aggregate, score_rule, Difficulty, GoldStandard, GroupBy, GroupRow, ScoreRow};
use crate::merge::{merge_rules, MergeConfig, MergeError, Submission};
use crate::rule::{AttributeBinding, Clause, Provenance, Rule};
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerErrorModel {
    /// Chance of leaving out each IF clause.
    pub p_drop_sensor: f64,
    /// Chance of leaving out each THEN clause.
    pub p_drop_effector: f64,
    /// Chance of picking a sibling trigger of the right sensor.
    pub p_wrong_trigger: f64,
    /// Per text attribute: a one-character edit.
    pub p_typo: f64,
    /// Per select/time attribute: a different legal value.
    pub p_wrong_value: f64,
    pub seed: u64,
}

impl Default for WorkerErrorModel {
    fn default() -> WorkerErrorModel {
        WorkerErrorModel {
            p_drop_sensor: 0.2,
            p_drop_effector: 0.2,
            p_wrong_trigger: 0.1,
            p_typo: 0.05,
            p_wrong_value: 0.1,
            seed: 42,
        }
    }
}

impl WorkerErrorModel {
    /// A model that reproduces the gold rule exactly.
    pub fn perfect(seed: u64) -> WorkerErrorModel {
        WorkerErrorModel {
            p_drop_sensor: 0.0,
            p_drop_effector: 0.0,
            p_wrong_trigger: 0.0,
            p_typo: 0.0,
            p_wrong_value: 0.0,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<WorkerErrorModel, SimError> {
        let model: WorkerErrorModel = serde_json::from_str(text).map_err(SimError::Json)?;
        model.check()?;
        Ok(model)
    }

    pub fn check(&self) -> Result<(), SimError> {
        let probs = [
            ("p_drop_sensor", self.p_drop_sensor),
            ("p_drop_effector", self.p_drop_effector),
            ("p_wrong_trigger", self.p_wrong_trigger),
            ("p_typo", self.p_typo),
            ("p_wrong_value", self.p_wrong_value),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Probability { name, value: p });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("malformed JSON: {0}")]
    Json(serde_json::Error),
    #[error("n_workers and trials must be at least 1")]
    EmptyExperiment,
    #[error("step {step}: unknown sensor `{sensor}`")]
    UnknownSensor { step: usize, sensor: String },
    #[error("step {step}: sensor `{sensor}` has no trigger `{trigger}`")]
    UnknownTrigger { step: usize, sensor: String, trigger: String },
    #[error("step {step}: minute goes backwards")]
    StepOrder { step: usize },
    #[error("step {step}: nothing to repeat")]
    NothingToRepeat { step: usize },
    #[error("{scenario}: {source}")]
    Merge { scenario: String, source: MergeError },
}

pub(crate) fn rng_for(seed: u64, scenario: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | trial as u64);
    rng
}

/// Replaces one character, inserts one, or deletes one.
fn typo(value: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    fn letter(rng: &mut impl Rng) -> char {
        (b'a' + rng.random_range(0..26u8)) as char
    }
    let pos = rng.random_range(0..chars.len());
    match rng.random_range(0..3u8) {
        0 => {
            let original = chars[pos].to_ascii_lowercase();
            let mut c = letter(rng);
            while c == original {
                c = letter(rng);
            }
            chars[pos] = c;
        }
        1 => {
            let at = rng.random_range(0..=chars.len());
            let c = letter(rng);
            chars.insert(at, c);
        }
        _ if chars.len() > 1 => {
            chars.remove(pos);
        }
        _ => chars.push(letter(rng)),
    }
    chars.into_iter().collect()
}

fn wrong_value(binding: &AttributeBinding, options: &[String], rng: &mut impl Rng) -> Option<String> {
    match binding.input_type {
        InputType::Select => {
            let current = binding.value.trim().to_lowercase();
            let others: Vec<&String> = options.iter().filter(|o| o.to_lowercase() != current).collect();
            (!others.is_empty()).then(|| others[rng.random_range(0..others.len())].clone())
        }
        InputType::Time => {
            let t = time::parse_hhmm(&binding.value)?;
            let shifted = t + Duration::hours(rng.random_range(1..24));
            Some(time::format_hhmm(shifted))
        }
        InputType::Text => None,
    }
}

/// The same sensor, a different trigger; attributes carry over where the
/// sibling has an attribute with the same suffix.
fn confuse_trigger(clause: &Clause, catalog: &Catalog, rng: &mut impl Rng) -> Option<Clause> {
    let sensor = catalog.sensor(&clause.owner_id)?;
    let siblings: Vec<_> = sensor.triggers.iter().filter(|t| t.id != clause.condition_id).collect();
    if siblings.is_empty() {
        return None;
    }
    let target = siblings[rng.random_range(0..siblings.len())];
    let suffix = |attr_id: &str, cond: &str| attr_id.strip_prefix(cond).unwrap_or(attr_id).to_string();
    let bindings = target
        .attributes
        .iter()
        .filter_map(|a| {
            let wanted = suffix(&a.id, &target.id);
            let old = clause.bindings.iter().find(|b| suffix(&b.attr_id, &clause.condition_id) == wanted)?;
            let legal = a.input_type != InputType::Select || a.option(&old.value).is_some();
            legal.then(|| AttributeBinding {
                attr_id: a.id.clone(),
                value: old.value.clone(),
                input_type: a.input_type,
                wire_type: a.wire_type(),
            })
        })
        .collect();
    Some(Clause { kind: clause.kind, owner_id: clause.owner_id.clone(), condition_id: target.id.clone(), bindings })
}

fn corrupt_attributes(clause: &mut Clause, catalog: &Catalog, model: &WorkerErrorModel, rng: &mut impl Rng) {
    let def = catalog.lookup(clause.kind, &clause.owner_id, &clause.condition_id).ok();
    for b in &mut clause.bindings {
        if b.value.trim().is_empty() {
            continue;
        }
        match b.input_type {
            InputType::Text => {
                if rng.random_bool(model.p_typo) {
                    b.value = typo(&b.value, rng);
                }
            }
            InputType::Select | InputType::Time => {
                if rng.random_bool(model.p_wrong_value) {
                    let options = def.and_then(|d| d.attribute(&b.attr_id)).map(|a| a.options.as_slice()).unwrap_or(&[]);
                    if let Some(v) = wrong_value(b, options, rng) {
                        b.value = v;
                    }
                }
            }
        }
    }
}

/// One simulated worker's attempt at `gold`. Each clause and attribute is
/// corrupted independently; the draw order is fixed so a given stream
/// always yields the same rule.
pub fn sample_worker_rule(gold: &Rule, model: &WorkerErrorModel, catalog: &Catalog, rng: &mut impl Rng) -> Rule {
    let mut ifs = Vec::new();
    for c in &gold.ifs {
        if rng.random_bool(model.p_drop_sensor) {
            continue;
        }
        let mut clause = c.clone();
        if rng.random_bool(model.p_wrong_trigger) {
            if let Some(other) = confuse_trigger(c, catalog, rng) {
                clause = other;
            }
        }
        corrupt_attributes(&mut clause, catalog, model, rng);
        ifs.push(clause);
    }
    let mut thens = Vec::new();
    for c in &gold.thens {
        if rng.random_bool(model.p_drop_effector) {
            continue;
        }
        let mut clause = c.clone();
        corrupt_attributes(&mut clause, catalog, model, rng);
        thens.push(clause);
    }
    Rule::new(ifs, thens).with_provenance(Provenance::Crowd)
}

/// The `n_workers` submissions of one trial, drawn from the stream for
/// (`scenario`, `trial`). Worker `w01` submits first, one second apart.
pub fn sample_submissions(
    gold: &Rule,
    model: &WorkerErrorModel,
    catalog: &Catalog,
    n_workers: usize,
    scenario: usize,
    trial: usize,
) -> Vec<Submission> {
    let mut rng = rng_for(model.seed, scenario, trial);
    (0..n_workers)
        .map(|w| Submission {
            worker_id: format!("w{:02}", w + 1),
            rule: sample_worker_rule(gold, model, catalog, &mut rng),
            submitted_at: time::epoch() + Duration::seconds(w as i64),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_workers: usize,
    pub trials: usize,
    pub threshold: usize,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig { n_workers: 10, trials: 1000, threshold: 2 }
    }
}

pub const SINGLE: &str = "single";
pub const CROWD_ONLY: &str = "crowd_only";
pub const VOTING: &str = "voting";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub difficulty: Difficulty,
    /// Means per condition: every single submission, the user's pick of
    /// the best submission, and the merged rule.
    pub conditions: Vec<GroupRow>,
    /// Trials whose merged rule came out empty on both sides.
    pub empty_merges: usize,
}

impl ScenarioReport {
    pub fn condition(&self, name: &str) -> Option<&GroupRow> {
        self.conditions.iter().find(|g| g.group == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: WorkerErrorModel,
    pub config: ExperimentConfig,
    pub scenarios: Vec<ScenarioReport>,
}

impl ExperimentReport {
    pub fn scenario(&self, id: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.scenario_id.eq_ignore_ascii_case(id))
    }
}

fn run_scenario(
    index: usize,
    gold: &GoldStandard,
    model: &WorkerErrorModel,
    cfg: &ExperimentConfig,
    catalog: &Catalog,
) -> Result<ScenarioReport, SimError> {
    let merge_cfg = MergeConfig { inclusion_threshold: cfg.threshold.min(cfg.n_workers), ..MergeConfig::default() };
    let primary = &gold.variants[0];
    let mut rows: Vec<ScoreRow> = Vec::with_capacity(cfg.trials * (cfg.n_workers + 2));
    let mut empty_merges = 0;
    for trial in 0..cfg.trials {
        let subs = sample_submissions(primary, model, catalog, cfg.n_workers, index, trial);
        let singles: Vec<ScoreRow> = subs.iter().map(|s| score_rule(&s.rule, gold, catalog, SINGLE)).collect();
        let mut pick = singles[0].clone();
        for row in &singles[1..] {
            if (row.avg_f1, row.avg_attr_accuracy) > (pick.avg_f1, pick.avg_attr_accuracy) {
                pick = row.clone();
            }
        }
        pick.condition = CROWD_ONLY.to_string();
        let merged = match merge_rules(&subs, &merge_cfg, catalog) {
            Ok(trace) => trace.rule,
            Err(MergeError::EmptyFinalRule { .. }) => {
                empty_merges += 1;
                Rule::new(Vec::new(), Vec::new())
            }
            Err(source) => return Err(SimError::Merge { scenario: gold.scenario_id.clone(), source }),
        };
        rows.extend(singles);
        rows.push(pick);
        rows.push(score_rule(&merged, gold, catalog, VOTING));
    }
    let mut conditions = aggregate(&rows, GroupBy::Condition);
    let order = |g: &GroupRow| [SINGLE, CROWD_ONLY, VOTING].iter().position(|c| *c == g.group);
    conditions.sort_by_key(order);
    Ok(ScenarioReport {
        scenario_id: gold.scenario_id.clone(),
        difficulty: gold.difficulty,
        conditions,
        empty_merges,
    })
}

/// Samples `n_workers` rules per trial for each scenario and scores the
/// three conditions. With one worker the merge threshold drops to 1, so
/// voting reproduces that worker's rule.
pub fn run_experiment(
    scenarios: &[GoldStandard],
    model: &WorkerErrorModel,
    cfg: &ExperimentConfig,
    catalog: &Catalog,
) -> Result<ExperimentReport, SimError> {
    model.check()?;
    if cfg.n_workers == 0 || cfg.trials == 0 {
        return Err(SimError::EmptyExperiment);
    }
    let scenarios = scenarios
        .iter()
        .enumerate()
        .map(|(i, g)| run_scenario(i, g, model, cfg, catalog))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport { model: *model, config: *cfg, scenarios })
}

/// A timed sequence of sensor readings. A `repeat` step re-sends the
/// previous step's readings unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedScript {
    pub scenario_id: String,
    pub start: Timestamp,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    /// Minutes after `start`.
    pub minute: i64,
    #[serde(default)]
    pub readings: Readings,
    #[serde(default)]
    pub repeat: bool,
}

impl FeedScript {
    pub fn from_json(text: &str) -> Result<FeedScript, SimError> {
        serde_json::from_str(text).map_err(SimError::Json)
    }
}

/// The shipped script for a scenario.
pub fn builtin_script(scenario_id: &str) -> Option<FeedScript> {
    crate::fixtures::FEED_SCRIPTS
        .iter()
        .find(|(id, _)| id.eq_ignore_ascii_case(scenario_id))
        .map(|(_, text)| FeedScript::from_json(text).expect("shipped feed scripts are valid"))
}

/// Expands a script into snapshots on the simulated clock.
pub fn synth_feed(script: &FeedScript, catalog: &Catalog) -> Result<Vec<SensorSnapshot>, SimError> {
    let mut out: Vec<SensorSnapshot> = Vec::with_capacity(script.steps.len());
    let mut last_minute = i64::MIN;
    for (step, s) in script.steps.iter().enumerate() {
        if s.minute < last_minute {
            return Err(SimError::StepOrder { step });
        }
        last_minute = s.minute;
        let readings = if s.repeat {
            out.last().map(|p| p.readings.clone()).ok_or(SimError::NothingToRepeat { step })?
        } else {
            for (sensor, triggers) in &s.readings {
                let def = catalog
                    .sensor(sensor)
                    .ok_or_else(|| SimError::UnknownSensor { step, sensor: sensor.clone() })?;
                for trigger in triggers.keys() {
                    if !def.triggers.iter().any(|t| &t.id == trigger) {
                        return Err(SimError::UnknownTrigger { step, sensor: sensor.clone(), trigger: trigger.clone() });
                    }
                }
            }
            s.readings.clone()
        };
        out.push(SensorSnapshot { at: script.start + Duration::minutes(s.minute), readings });
    }
    Ok(out)
}
