//! Declarative registry of sensors (IFs) and effectors (THENs).
//!
//! A catalog is a single JSON document. Every sensor exposes one or more
//! triggers and every effector one or more actions; each of those carries
//! typed attributes. Adding a sensor or effector is a data change only.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule::ClauseKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputType {
    Text,
    Select,
    Time,
}

impl InputType {
    pub fn as_str(self) -> &'static str {
        match self {
            InputType::Text => "text",
            InputType::Select => "select",
            InputType::Time => "time",
        }
    }

    pub fn parse(s: &str) -> Option<InputType> {
        match s {
            "text" => Some(InputType::Text),
            "select" => Some(InputType::Select),
            "time" => Some(InputType::Time),
            _ => None,
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an attribute means to the engine and the validator, independent of
/// its wire name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeRole {
    Day,
    Time,
    Start,
    End,
    Person,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDef {
    pub id: String,
    pub label: String,
    #[serde(rename = "type")]
    pub input_type: InputType,
    #[serde(default)]
    pub options: Vec<String>,
    #[serde(default)]
    pub required: bool,
    /// Type written in the rule wire format when it differs from `input_type`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wire_type: Option<InputType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<AttributeRole>,
    /// Name of a semantic constraint hook checked by the validator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
}

impl AttributeDef {
    pub fn wire_type(&self) -> InputType {
        self.wire_type.unwrap_or(self.input_type)
    }

    /// Case-insensitive option lookup, returning the catalog spelling.
    pub fn option(&self, value: &str) -> Option<&str> {
        let v = value.trim();
        self.options
            .iter()
            .find(|o| o.eq_ignore_ascii_case(v))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollingClass {
    /// Every 100 ms.
    Fast,
    Hourly,
    Daily,
    /// Evaluated only when the sensor delivers an event.
    OnEvent,
}

impl PollingClass {
    pub fn period(self) -> Option<chrono::Duration> {
        match self {
            PollingClass::Fast => Some(chrono::Duration::milliseconds(100)),
            PollingClass::Hourly => Some(chrono::Duration::hours(1)),
            PollingClass::Daily => Some(chrono::Duration::days(1)),
            PollingClass::OnEvent => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduling {
    Immediate,
    Scheduled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerDef {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub template: String,
    pub polling_class: PollingClass,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDef {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub template: String,
    pub scheduling: Scheduling,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDef {
    pub id: String,
    pub label: String,
    pub triggers: Vec<TriggerDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectorDef {
    pub id: String,
    pub label: String,
    pub actions: Vec<ActionDef>,
}

/// A trigger or an action, whichever side of the rule it came from.
#[derive(Debug, Clone, Copy)]
pub enum Definition<'a> {
    Trigger(&'a TriggerDef),
    Action(&'a ActionDef),
}

impl<'a> Definition<'a> {
    pub fn id(&self) -> &'a str {
        match self {
            Definition::Trigger(t) => &t.id,
            Definition::Action(a) => &a.id,
        }
    }

    pub fn label(&self) -> &'a str {
        match self {
            Definition::Trigger(t) => &t.label,
            Definition::Action(a) => &a.label,
        }
    }

    pub fn template(&self) -> &'a str {
        match self {
            Definition::Trigger(t) => &t.template,
            Definition::Action(a) => &a.template,
        }
    }

    pub fn attributes(&self) -> &'a [AttributeDef] {
        match self {
            Definition::Trigger(t) => &t.attributes,
            Definition::Action(a) => &a.attributes,
        }
    }

    pub fn attribute(&self, attr_id: &str) -> Option<&'a AttributeDef> {
        self.attributes().iter().find(|a| a.id == attr_id)
    }

    pub fn attribute_with_role(&self, role: AttributeRole) -> Option<&'a AttributeDef> {
        self.attributes().iter().find(|a| a.role == Some(role))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("unknown effector `{0}`")]
    UnknownEffector(String),
    #[error("sensor `{owner}` has no trigger `{id}`")]
    UnknownTrigger { owner: String, id: String },
    #[error("effector `{owner}` has no action `{id}`")]
    UnknownAction { owner: String, id: String },
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("malformed catalog document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: duplicate id `{id}`")]
    DuplicateId { id: String, path: String },
    #[error("{path}: id `{id}` must start with `{prefix}`")]
    BadPrefix {
        id: String,
        path: String,
        prefix: &'static str,
    },
    #[error("{path}: `{id}` declares no triggers or actions")]
    Empty { id: String, path: String },
    #[error("{path}: select attribute `{id}` has no options")]
    MissingOptions { id: String, path: String },
    #[error("{path}: attribute `{id}` repeats option `{option}`")]
    DuplicateOption {
        id: String,
        path: String,
        option: String,
    },
    #[error("{path}: {input_type} attribute `{id}` must not declare options")]
    UnexpectedOptions {
        id: String,
        path: String,
        input_type: InputType,
    },
    #[error("{path}: template of `{id}` references unknown attribute `{placeholder}`")]
    UnknownPlaceholder {
        id: String,
        path: String,
        placeholder: String,
    },
    #[error("antagonistic[{index}]: unknown action `{id}`")]
    UnknownAntagonist { index: usize, id: String },
}

/// The full registry. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub version: String,
    pub sensors: Vec<SensorDef>,
    pub effectors: Vec<EffectorDef>,
    /// Pairs of action ids whose effects cancel each other out.
    #[serde(default)]
    pub antagonistic: Vec<[String; 2]>,
}

pub fn load_catalog(source: &str) -> Result<Catalog, CatalogError> {
    let mut catalog: Catalog = serde_json::from_str(source)?;
    catalog.check_and_complete()?;
    Ok(catalog)
}

impl Catalog {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_catalog(&text)
    }

    pub fn empty() -> Catalog {
        Catalog {
            version: String::new(),
            sensors: Vec::new(),
            effectors: Vec::new(),
            antagonistic: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorDef> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn effector(&self, id: &str) -> Option<&EffectorDef> {
        self.effectors.iter().find(|e| e.id == id)
    }

    pub fn owner_label(&self, kind: ClauseKind, owner_id: &str) -> Option<&str> {
        match kind {
            ClauseKind::Sensor => self.sensor(owner_id).map(|s| s.label.as_str()),
            ClauseKind::Effector => self.effector(owner_id).map(|e| e.label.as_str()),
        }
    }

    pub fn lookup(
        &self,
        kind: ClauseKind,
        owner_id: &str,
        condition_id: &str,
    ) -> Result<Definition<'_>, LookupError> {
        match kind {
            ClauseKind::Sensor => {
                let sensor = self
                    .sensor(owner_id)
                    .ok_or_else(|| LookupError::UnknownSensor(owner_id.to_string()))?;
                sensor
                    .triggers
                    .iter()
                    .find(|t| t.id == condition_id)
                    .map(Definition::Trigger)
                    .ok_or_else(|| LookupError::UnknownTrigger {
                        owner: owner_id.to_string(),
                        id: condition_id.to_string(),
                    })
            }
            ClauseKind::Effector => {
                let effector = self
                    .effector(owner_id)
                    .ok_or_else(|| LookupError::UnknownEffector(owner_id.to_string()))?;
                effector
                    .actions
                    .iter()
                    .find(|a| a.id == condition_id)
                    .map(Definition::Action)
                    .ok_or_else(|| LookupError::UnknownAction {
                        owner: owner_id.to_string(),
                        id: condition_id.to_string(),
                    })
            }
        }
    }

    pub fn trigger(&self, owner_id: &str, trigger_id: &str) -> Option<&TriggerDef> {
        match self.lookup(ClauseKind::Sensor, owner_id, trigger_id) {
            Ok(Definition::Trigger(t)) => Some(t),
            _ => None,
        }
    }

    pub fn action(&self, owner_id: &str, action_id: &str) -> Option<&ActionDef> {
        match self.lookup(ClauseKind::Effector, owner_id, action_id) {
            Ok(Definition::Action(a)) => Some(a),
            _ => None,
        }
    }

    pub fn are_antagonistic(&self, action_a: &str, action_b: &str) -> bool {
        self.antagonistic.iter().any(|[x, y]| {
            (x == action_a && y == action_b) || (x == action_b && y == action_a)
        })
    }

    pub fn mean_triggers_per_sensor(&self) -> f64 {
        if self.sensors.is_empty() {
            return 0.0;
        }
        let total: usize = self.sensors.iter().map(|s| s.triggers.len()).sum();
        total as f64 / self.sensors.len() as f64
    }

    fn check_and_complete(&mut self) -> Result<(), CatalogError> {
        let mut owners = BTreeSet::new();
        for (i, sensor) in self.sensors.iter_mut().enumerate() {
            let path = format!("sensors[{i}]");
            check_owner(&sensor.id, "if-", &path, &mut owners)?;
            if sensor.triggers.is_empty() {
                return Err(CatalogError::Empty { id: sensor.id.clone(), path });
            }
            let mut ids = BTreeSet::new();
            for (j, trigger) in sensor.triggers.iter_mut().enumerate() {
                let path = format!("{path}.triggers[{j}]");
                if !ids.insert(trigger.id.clone()) {
                    return Err(CatalogError::DuplicateId { id: trigger.id.clone(), path });
                }
                check_attributes(&trigger.attributes, &path)?;
                complete_template(
                    &trigger.id,
                    &mut trigger.template,
                    &trigger.description,
                    &trigger.label,
                    &trigger.attributes,
                    &path,
                )?;
            }
        }
        for (i, effector) in self.effectors.iter_mut().enumerate() {
            let path = format!("effectors[{i}]");
            check_owner(&effector.id, "then-", &path, &mut owners)?;
            if effector.actions.is_empty() {
                return Err(CatalogError::Empty { id: effector.id.clone(), path });
            }
            let mut ids = BTreeSet::new();
            for (j, action) in effector.actions.iter_mut().enumerate() {
                let path = format!("{path}.actions[{j}]");
                if !ids.insert(action.id.clone()) {
                    return Err(CatalogError::DuplicateId { id: action.id.clone(), path });
                }
                check_attributes(&action.attributes, &path)?;
                complete_template(
                    &action.id,
                    &mut action.template,
                    &action.description,
                    &action.label,
                    &action.attributes,
                    &path,
                )?;
            }
        }
        for (index, pair) in self.antagonistic.iter().enumerate() {
            for id in pair {
                let known = self
                    .effectors
                    .iter()
                    .any(|e| e.actions.iter().any(|a| &a.id == id));
                if !known {
                    return Err(CatalogError::UnknownAntagonist { index, id: id.clone() });
                }
            }
        }
        Ok(())
    }
}

fn check_owner(
    id: &str,
    prefix: &'static str,
    path: &str,
    seen: &mut BTreeSet<String>,
) -> Result<(), CatalogError> {
    if !id.starts_with(prefix) {
        return Err(CatalogError::BadPrefix { id: id.to_string(), path: path.to_string(), prefix });
    }
    if !seen.insert(id.to_string()) {
        return Err(CatalogError::DuplicateId { id: id.to_string(), path: path.to_string() });
    }
    Ok(())
}

fn check_attributes(attrs: &[AttributeDef], owner_path: &str) -> Result<(), CatalogError> {
    let mut ids = BTreeSet::new();
    for (k, attr) in attrs.iter().enumerate() {
        let path = format!("{owner_path}.attributes[{k}]");
        if !ids.insert(attr.id.as_str()) {
            return Err(CatalogError::DuplicateId { id: attr.id.clone(), path });
        }
        match attr.input_type {
            InputType::Select => {
                if attr.options.is_empty() {
                    return Err(CatalogError::MissingOptions { id: attr.id.clone(), path });
                }
                let mut seen = BTreeSet::new();
                for option in &attr.options {
                    if !seen.insert(option.to_ascii_lowercase()) {
                        return Err(CatalogError::DuplicateOption {
                            id: attr.id.clone(),
                            path,
                            option: option.clone(),
                        });
                    }
                }
            }
            other => {
                if !attr.options.is_empty() {
                    return Err(CatalogError::UnexpectedOptions {
                        id: attr.id.clone(),
                        path,
                        input_type: other,
                    });
                }
            }
        }
    }
    Ok(())
}

fn complete_template(
    id: &str,
    template: &mut String,
    description: &str,
    label: &str,
    attrs: &[AttributeDef],
    path: &str,
) -> Result<(), CatalogError> {
    if template.trim().is_empty() {
        let lead = if description.is_empty() { label } else { description };
        *template = generic_template(lead, attrs);
    }
    for (_, placeholder) in placeholders(template) {
        if !attrs.iter().any(|a| a.id == placeholder) {
            return Err(CatalogError::UnknownPlaceholder {
                id: id.to_string(),
                path: path.to_string(),
                placeholder: placeholder.to_string(),
            });
        }
    }
    Ok(())
}

/// `"<description>: Label=[attr-id], ..."`, the fallback for conditions
/// without a hand-written template.
pub fn generic_template(description: &str, attrs: &[AttributeDef]) -> String {
    let lead = description.trim();
    if attrs.is_empty() {
        return lead.trim_end_matches(['.', ':']).to_string();
    }
    let fields: Vec<String> = attrs.iter().map(|a| format!("{}=[{}]", a.label, a.id)).collect();
    format!("{}: {}", lead.trim_end_matches(':'), fields.join(", "))
}

/// Byte ranges and names of the `[attribute-id]` placeholders in a template.
pub fn placeholders(template: &str) -> Vec<(Range<usize>, &str)> {
    let mut found = Vec::new();
    let mut rest = 0;
    while let Some(open) = template[rest..].find('[') {
        let start = rest + open;
        let Some(close) = template[start..].find(']') else { break };
        let end = start + close;
        let name = &template[start + 1..end];
        let is_id = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if is_id {
            found.push((start..end + 1, name));
            rest = end + 1;
        } else {
            rest = start + 1;
        }
    }
    found
}
