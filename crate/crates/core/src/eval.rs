//! Rule-quality scoring against gold-standard scenarios.
//!
//! Sensor/effector selection is scored with precision, recall and F1 over
//! owner ids, separately for the IF and THEN sides. Attribute filling is
//! scored per clause as the fraction of the gold trigger's attribute slots
//! holding a correct value; a wrong trigger/action scores 0. A rule is
//! scored against every gold variant of its scenario and keeps the best.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{Catalog, InputType};
use crate::rule::{canonical_value, decode_rule, Clause, ClauseKind, DecodeError, Rule};
use crate::time::Timestamp;
use crate::validator::validate_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Intermediate,
    Hard,
}

impl Difficulty {
    /// (IF clauses, THEN clauses) of a primary gold rule at this tier.
    pub fn clause_counts(self) -> (usize, usize) {
        match self {
            Difficulty::Easy => (1, 1),
            Difficulty::Intermediate => (2, 1),
            Difficulty::Hard => (2, 2),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Intermediate => "intermediate",
            Difficulty::Hard => "hard",
        })
    }
}

/// Accepted alternatives for a free-text attribute, judged after trimming
/// and ignoring case.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synonyms {
    #[serde(default)]
    pub equals: Vec<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub any_nonblank: bool,
}

/// Two attributes on different clauses that are correct together when they
/// hold the same accepted value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedAttributes {
    pub attributes: [String; 2],
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldStandard {
    pub scenario_id: String,
    pub title: String,
    pub difficulty: Difficulty,
    /// The first variant is the primary gold rule.
    pub variants: Vec<Rule>,
    pub synonyms: BTreeMap<String, Synonyms>,
    pub paired: Vec<PairedAttributes>,
    pub validate_at: Timestamp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldFile {
    scenario_id: String,
    title: String,
    difficulty: Difficulty,
    variants: Vec<Value>,
    #[serde(default)]
    synonyms: BTreeMap<String, Synonyms>,
    #[serde(default)]
    paired: Vec<PairedAttributes>,
    validate_at: Timestamp,
}

#[derive(Debug, Error)]
pub enum GoldError {
    #[error("malformed gold file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{scenario}: variants[{index}]: {source}")]
    Variant { scenario: String, index: usize, source: DecodeError },
    #[error("{scenario}: variants[{index}] does not validate: {codes}")]
    Invalid { scenario: String, index: usize, codes: String },
    #[error("{scenario}: no variants")]
    NoVariants { scenario: String },
    #[error("{scenario}: a {difficulty} scenario has {expected:?} IF/THEN clauses, the primary rule has {found:?}")]
    Difficulty { scenario: String, difficulty: Difficulty, expected: (usize, usize), found: (usize, usize) },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub fn load_gold(text: &str, catalog: &Catalog) -> Result<GoldStandard, GoldError> {
    let file: GoldFile = serde_json::from_str(text)?;
    let scenario = file.scenario_id.clone();
    if file.variants.is_empty() {
        return Err(GoldError::NoVariants { scenario });
    }
    let mut variants = Vec::with_capacity(file.variants.len());
    for (index, doc) in file.variants.iter().enumerate() {
        let rule = decode_rule(doc, catalog).map_err(|source| GoldError::Variant {
            scenario: scenario.clone(),
            index,
            source,
        })?;
        let report = validate_rule(&rule, catalog, file.validate_at);
        if !report.ok {
            let codes: Vec<&str> = report.errors().map(|i| i.code.as_str()).collect();
            return Err(GoldError::Invalid { scenario: scenario.clone(), index, codes: codes.join(", ") });
        }
        variants.push(rule);
    }
    let found = (variants[0].ifs.len(), variants[0].thens.len());
    let expected = file.difficulty.clause_counts();
    if found != expected {
        return Err(GoldError::Difficulty { scenario, difficulty: file.difficulty, expected, found });
    }
    Ok(GoldStandard {
        scenario_id: file.scenario_id,
        title: file.title,
        difficulty: file.difficulty,
        variants,
        synonyms: file.synonyms,
        paired: file.paired,
        validate_at: file.validate_at,
    })
}

/// Loads every `*.json` gold file in `dir`, sorted by scenario id.
pub fn load_gold_dir(dir: &Path, catalog: &Catalog) -> Result<Vec<GoldStandard>, GoldError> {
    let io = |source| GoldError::Io { path: dir.display().to_string(), source };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|source| GoldError::Io { path: path.display().to_string(), source })?;
        out.push(load_gold(&text, catalog)?);
    }
    out.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    Ok(out)
}

/// The six shipped scenarios.
pub fn shipped_gold(catalog: &Catalog) -> Vec<GoldStandard> {
    crate::fixtures::GOLD
        .iter()
        .map(|(_, text)| load_gold(text, catalog).expect("shipped gold fixtures are valid"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Empty selection scores 0 precision; an empty gold set scores 0 recall.
    pub fn from_sets(selected: &BTreeSet<&str>, gold: &BTreeSet<&str>) -> Prf {
        let hit = selected.intersection(gold).count() as f64;
        let precision = if selected.is_empty() { 0.0 } else { hit / selected.len() as f64 };
        let recall = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionScores {
    #[serde(rename = "if")]
    pub ifs: Prf,
    #[serde(rename = "then")]
    pub thens: Prf,
}

impl SelectionScores {
    pub fn avg_f1(&self) -> f64 {
        (self.ifs.f1 + self.thens.f1) / 2.0
    }
}

/// Scores sensor and effector selection by owner id.
pub fn selection_scores(rule: &Rule, gold: &Rule) -> SelectionScores {
    let side = |k| Prf::from_sets(&rule.owners(k), &gold.owners(k));
    SelectionScores { ifs: side(ClauseKind::Sensor), thens: side(ClauseKind::Effector) }
}

fn value_correct(attr_id: &str, input_type: InputType, got: &str, expected: &str, synonyms: &BTreeMap<String, Synonyms>) -> bool {
    let got_c = canonical_value(got, input_type);
    if got_c == canonical_value(expected, input_type) {
        return true;
    }
    let Some(s) = synonyms.get(attr_id) else { return false };
    if s.equals.iter().any(|e| canonical_value(e, input_type) == got_c) {
        return true;
    }
    if got_c.is_empty() {
        return false;
    }
    s.any_nonblank || s.contains.iter().any(|c| got_c.contains(&c.trim().to_lowercase()))
}

/// Fraction of the gold clause's attribute slots that `clause` fills
/// correctly; 0 when the trigger/action differs, 1 for a matching
/// trigger/action without attributes.
pub fn attribute_accuracy(
    clause: &Clause,
    gold: &Clause,
    catalog: &Catalog,
    synonyms: &BTreeMap<String, Synonyms>,
) -> f64 {
    accuracy_with(clause, gold, catalog, synonyms, &BTreeSet::new())
}

fn accuracy_with(
    clause: &Clause,
    gold: &Clause,
    catalog: &Catalog,
    synonyms: &BTreeMap<String, Synonyms>,
    forced: &BTreeSet<String>,
) -> f64 {
    if clause.owner_id != gold.owner_id || clause.condition_id != gold.condition_id {
        return 0.0;
    }
    let Ok(def) = catalog.lookup(gold.kind, &gold.owner_id, &gold.condition_id) else { return 0.0 };
    let slots = def.attributes();
    if slots.is_empty() {
        return 1.0;
    }
    let correct = slots
        .iter()
        .filter(|a| {
            forced.contains(&a.id)
                || value_correct(&a.id, a.input_type, clause.value(&a.id), gold.value(&a.id), synonyms)
        })
        .count();
    correct as f64 / slots.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scenario_id: String,
    pub difficulty: Difficulty,
    /// Label of the experimental condition the rule came from.
    pub condition: String,
    /// Index of the gold variant the rule was scored against.
    pub variant: usize,
    pub selection: SelectionScores,
    pub avg_f1: f64,
    pub if_attr_accuracy: f64,
    pub then_attr_accuracy: f64,
    pub avg_attr_accuracy: f64,
    /// Every score is exactly 1.
    pub perfect: bool,
    pub clauses: Vec<ClauseScore>,
}

/// Attributes forced correct by a paired-consistency constraint.
fn paired_overrides(rule: &Rule, gold: &GoldStandard) -> BTreeSet<String> {
    let mut forced = BTreeSet::new();
    let value_of = |attr: &str| {
        rule.ifs
            .iter()
            .chain(&rule.thens)
            .find_map(|c| c.binding(attr).map(|b| b.value.trim().to_lowercase()))
    };
    for pair in &gold.paired {
        let [a, b] = &pair.attributes;
        if let (Some(va), Some(vb)) = (value_of(a), value_of(b)) {
            let accepted = pair.values.iter().any(|v| v.trim().to_lowercase() == va);
            if va == vb && accepted {
                forced.insert(a.clone());
                forced.insert(b.clone());
            }
        }
    }
    forced
}

/// Attribute accuracy of one clause whose owner both rules selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseScore {
    pub side: String,
    pub owner_id: String,
    pub condition_id: String,
    pub gold_condition_id: String,
    pub accuracy: f64,
}

fn side_accuracy(
    rule: &Rule,
    variant: &Rule,
    kind: ClauseKind,
    catalog: &Catalog,
    gold: &GoldStandard,
    forced: &BTreeSet<String>,
) -> (f64, Vec<ClauseScore>) {
    let shared: Vec<&str> = rule.owners(kind).intersection(&variant.owners(kind)).copied().collect();
    let side = match kind {
        ClauseKind::Sensor => "if",
        ClauseKind::Effector => "then",
    };
    let scores: Vec<ClauseScore> = shared
        .iter()
        .map(|owner| {
            let mine = rule.clauses(kind).iter().find(|c| c.owner_id == *owner).expect("owner selected");
            let theirs = variant.clauses(kind).iter().find(|c| c.owner_id == *owner).expect("owner in gold");
            ClauseScore {
                side: side.to_string(),
                owner_id: owner.to_string(),
                condition_id: mine.condition_id.clone(),
                gold_condition_id: theirs.condition_id.clone(),
                accuracy: accuracy_with(mine, theirs, catalog, &gold.synonyms, forced),
            }
        })
        .collect();
    if scores.is_empty() {
        return (0.0, scores);
    }
    let total: f64 = scores.iter().map(|c| c.accuracy).sum();
    (total / scores.len() as f64, scores)
}

/// Scores `rule` against its best-matching gold variant: highest mean F1,
/// then highest mean attribute accuracy, then the earliest variant.
pub fn score_rule(rule: &Rule, gold: &GoldStandard, catalog: &Catalog, condition: &str) -> ScoreRow {
    let forced = paired_overrides(rule, gold);
    let mut best: Option<ScoreRow> = None;
    for (index, variant) in gold.variants.iter().enumerate() {
        let selection = selection_scores(rule, variant);
        let (if_acc, mut clauses) = side_accuracy(rule, variant, ClauseKind::Sensor, catalog, gold, &forced);
        let (then_acc, then_clauses) = side_accuracy(rule, variant, ClauseKind::Effector, catalog, gold, &forced);
        clauses.extend(then_clauses);
        let avg_f1 = selection.avg_f1();
        let avg_acc = (if_acc + then_acc) / 2.0;
        let row = ScoreRow {
            scenario_id: gold.scenario_id.clone(),
            difficulty: gold.difficulty,
            condition: condition.to_string(),
            variant: index,
            selection,
            avg_f1,
            if_attr_accuracy: if_acc,
            then_attr_accuracy: then_acc,
            avg_attr_accuracy: avg_acc,
            perfect: avg_f1 == 1.0 && avg_acc == 1.0,
            clauses,
        };
        let better = match &best {
            None => true,
            Some(b) => (avg_f1, avg_acc) > (b.avg_f1, b.avg_attr_accuracy),
        };
        if better {
            best = Some(row);
        }
    }
    best.expect("gold has at least one variant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Condition,
    Difficulty,
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub rules: usize,
    pub if_precision: f64,
    pub if_recall: f64,
    pub if_f1: f64,
    pub then_precision: f64,
    pub then_recall: f64,
    pub then_f1: f64,
    pub avg_f1: f64,
    pub if_attr_accuracy: f64,
    pub then_attr_accuracy: f64,
    pub avg_attr_accuracy: f64,
    pub perfect_rate: f64,
}

/// Arithmetic means per group, groups in key order.
pub fn aggregate(rows: &[ScoreRow], group_by: GroupBy) -> Vec<GroupRow> {
    let mut groups: BTreeMap<String, Vec<&ScoreRow>> = BTreeMap::new();
    for r in rows {
        let key = match group_by {
            GroupBy::Condition => r.condition.clone(),
            GroupBy::Difficulty => format!("{}", r.difficulty as u8) + ":" + &r.difficulty.to_string(),
            GroupBy::Scenario => r.scenario_id.clone(),
        };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&ScoreRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let group = match key.split_once(':') {
                Some((_, name)) if group_by == GroupBy::Difficulty => name.to_string(),
                _ => key,
            };
            GroupRow {
                group,
                rules: rs.len(),
                if_precision: mean(&|r| r.selection.ifs.precision),
                if_recall: mean(&|r| r.selection.ifs.recall),
                if_f1: mean(&|r| r.selection.ifs.f1),
                then_precision: mean(&|r| r.selection.thens.precision),
                then_recall: mean(&|r| r.selection.thens.recall),
                then_f1: mean(&|r| r.selection.thens.f1),
                avg_f1: mean(&|r| r.avg_f1),
                if_attr_accuracy: mean(&|r| r.if_attr_accuracy),
                then_attr_accuracy: mean(&|r| r.then_attr_accuracy),
                avg_attr_accuracy: mean(&|r| r.avg_attr_accuracy),
                perfect_rate: mean(&|r| if r.perfect { 1.0 } else { 0.0 }),
            }
        })
        .collect()
}
