//! Reading input files. A path may name a single document or a directory
//! of `.json` documents; a document is a clause, a rule, a rule envelope,
//! a rule list (`{"rules": [...]}`, optionally with `scenario_id` and
//! `condition`) or a gold-standard file.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use rulesmith_core::catalog::Catalog;
use rulesmith_core::rule::{decode_clause, decode_document, Clause, ClauseKind, DecodeError, Rule};
use rulesmith_core::time::{parse_timestamp, Timestamp};
use serde_json::Value;

/// Bad arguments or input that cannot be read at all (exit status 2).
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(msg: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(UsageError(msg.into()))
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| UsageError::new(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> Result<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| UsageError::new(format!("{} is not JSON: {e}", path.display())))
}

pub fn timestamp(s: &str) -> Result<Timestamp, String> {
    parse_timestamp(s).ok_or_else(|| format!("`{s}` is not a timestamp (YYYY-MM-DDTHH:MM[:SS])"))
}

/// `.json` files in `path`, sorted, or `path` itself.
pub fn files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        if !path.exists() {
            return Err(UsageError::new(format!("{} does not exist", path.display())));
        }
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| UsageError::new(format!("cannot list {}: {e}", path.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Clause,
    Rule,
    Envelope,
    List,
    Gold,
}

pub fn shape(doc: &Value) -> Shape {
    if doc.get("variants").is_some() {
        Shape::Gold
    } else if doc.get("rules").is_some() {
        Shape::List
    } else if doc.get("rule").is_some() {
        Shape::Envelope
    } else if doc.get("condition").is_some() {
        Shape::Clause
    } else {
        Shape::Rule
    }
}

pub enum Decoded {
    Clause(Clause),
    Rule(Rule),
}

/// Decodes a clause, a rule or an envelope. A clause is a sensor clause
/// unless its `name` is an effector.
pub fn decode(doc: &Value, catalog: &Catalog) -> Result<Decoded, DecodeError> {
    if shape(doc) != Shape::Clause {
        return decode_document(doc, catalog).map(Decoded::Rule);
    }
    let name = doc.get("name").and_then(Value::as_str).unwrap_or_default();
    let kind = if catalog.effector(name).is_some() { ClauseKind::Effector } else { ClauseKind::Sensor };
    decode_clause(doc, kind, catalog, "").map(Decoded::Clause)
}

/// One document found in an input file.
#[derive(Debug, Clone)]
pub struct RuleDoc {
    /// `file` or `file#index`.
    pub source: String,
    pub doc: Value,
    pub scenario: Option<String>,
    pub condition: Option<String>,
    pub validate_at: Option<Timestamp>,
    /// Variant index when the document came from a gold file.
    pub variant: Option<usize>,
}

fn text_field(doc: &Value, key: &str) -> Option<String> {
    doc.get(key).and_then(Value::as_str).map(str::to_string)
}

/// Scenario id from a file name such as `s3.json` or `S3-voting.json`.
pub fn scenario_from_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let head: String = stem.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
    (!head.is_empty()).then(|| head.to_ascii_uppercase())
}

pub fn rule_docs(path: &Path) -> Result<Vec<RuleDoc>> {
    let mut out = Vec::new();
    for file in files(path)? {
        let doc = read_json(&file)?;
        let name = file.display().to_string();
        match shape(&doc) {
            Shape::Clause | Shape::Rule | Shape::Envelope => out.push(RuleDoc {
                source: name,
                doc,
                scenario: scenario_from_name(&file),
                condition: None,
                validate_at: None,
                variant: None,
            }),
            Shape::List => {
                let Some(rules) = doc["rules"].as_array() else {
                    return Err(UsageError::new(format!("{name}: `rules` must be an array")));
                };
                let scenario = text_field(&doc, "scenario_id").or_else(|| scenario_from_name(&file));
                for (i, r) in rules.iter().enumerate() {
                    out.push(RuleDoc {
                        source: format!("{name}#{i}"),
                        doc: r.clone(),
                        scenario: scenario.clone(),
                        condition: text_field(&doc, "condition"),
                        validate_at: None,
                        variant: None,
                    });
                }
            }
            Shape::Gold => {
                let Some(variants) = doc["variants"].as_array() else {
                    return Err(UsageError::new(format!("{name}: `variants` must be an array")));
                };
                let validate_at = doc.get("validate_at").and_then(Value::as_str).and_then(parse_timestamp);
                for (i, r) in variants.iter().enumerate() {
                    out.push(RuleDoc {
                        source: format!("{name}#{i}"),
                        doc: r.clone(),
                        scenario: text_field(&doc, "scenario_id"),
                        condition: None,
                        validate_at,
                        variant: Some(i),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names() {
        assert_eq!(scenario_from_name(Path::new("x/s3.json")).as_deref(), Some("S3"));
        assert_eq!(scenario_from_name(Path::new("S4-voting.json")).as_deref(), Some("S4"));
        assert_eq!(scenario_from_name(Path::new("-.json")), None);
    }

    #[test]
    fn shapes() {
        assert_eq!(shape(&serde_json::json!({"if": [], "then": []})), Shape::Rule);
        assert_eq!(shape(&serde_json::json!({"name": "if-clock", "condition": "if-clock-time"})), Shape::Clause);
        assert_eq!(shape(&serde_json::json!({"rule": {}})), Shape::Envelope);
        assert_eq!(shape(&serde_json::json!({"rules": []})), Shape::List);
        assert_eq!(shape(&serde_json::json!({"variants": []})), Shape::Gold);
    }
}
