//! The rule model and its JSON wire codec.
//!
//! On the wire a rule is `{"if": [...], "then": [...]}` where every clause is
//! `{"name", "condition", "attributes": [{"name", "value", "type"}]}`. Blank
//! attribute values are omitted when encoding and missing attributes decode
//! as blank. Rule metadata (id, provenance, timestamps) never appears in the
//! rule document itself; it travels in a [`RuleEnvelope`].

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{Catalog, InputType, LookupError};
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseKind {
    Sensor,
    Effector,
}

impl ClauseKind {
    pub fn side(self) -> &'static str {
        match self {
            ClauseKind::Sensor => "if",
            ClauseKind::Effector => "then",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub String);

impl RuleId {
    pub fn new(id: impl Into<String>) -> RuleId {
        RuleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RuleId {
    fn from(s: &str) -> RuleId {
        RuleId(s.to_string())
    }
}

/// Who produced a rule. Crowd-made rules display blue, rules the user
/// created or touched display green.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Crowd,
    User,
    CrowdEditedByUser,
    CrowdVoting,
}

impl Provenance {
    pub fn color(self) -> &'static str {
        match self {
            Provenance::Crowd | Provenance::CrowdVoting => "blue",
            Provenance::User | Provenance::CrowdEditedByUser => "green",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeBinding {
    pub attr_id: String,
    /// Empty means blank: a wildcard in an IF clause, unset in a THEN clause.
    pub value: String,
    pub input_type: InputType,
    pub wire_type: InputType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub kind: ClauseKind,
    pub owner_id: String,
    pub condition_id: String,
    pub bindings: Vec<AttributeBinding>,
}

impl Clause {
    /// Builds a clause against the catalog, taking attribute types from it.
    pub fn bind(
        catalog: &Catalog,
        kind: ClauseKind,
        owner_id: &str,
        condition_id: &str,
        values: &[(&str, &str)],
    ) -> Result<Clause, DecodeError> {
        let def = catalog
            .lookup(kind, owner_id, condition_id)
            .map_err(|e| DecodeError::lookup(kind.side(), e))?;
        let mut bindings = Vec::with_capacity(values.len());
        for (attr_id, value) in values {
            let attr = def.attribute(attr_id).ok_or_else(|| DecodeError {
                path: format!("{}.attributes", kind.side()),
                kind: DecodeErrorKind::UnknownAttribute(attr_id.to_string()),
            })?;
            bindings.push(AttributeBinding {
                attr_id: attr.id.clone(),
                value: value.to_string(),
                input_type: attr.input_type,
                wire_type: attr.wire_type(),
            });
        }
        Ok(Clause {
            kind,
            owner_id: owner_id.to_string(),
            condition_id: condition_id.to_string(),
            bindings,
        })
    }

    /// The bound value, or `""` when the attribute is blank or absent.
    pub fn value(&self, attr_id: &str) -> &str {
        self.bindings
            .iter()
            .find(|b| b.attr_id == attr_id)
            .map(|b| b.value.as_str())
            .unwrap_or("")
    }

    pub fn binding(&self, attr_id: &str) -> Option<&AttributeBinding> {
        self.bindings.iter().find(|b| b.attr_id == attr_id)
    }

    pub fn set_value(&mut self, attr_id: &str, value: &str) {
        if let Some(b) = self.bindings.iter_mut().find(|b| b.attr_id == attr_id) {
            b.value = value.to_string();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    pub ifs: Vec<Clause>,
    pub thens: Vec<Clause>,
    pub provenance: Provenance,
    pub created_at: Timestamp,
    #[serde(default)]
    pub session_id: Option<String>,
}

impl Rule {
    pub fn new(ifs: Vec<Clause>, thens: Vec<Clause>) -> Rule {
        Rule {
            id: RuleId::default(),
            ifs,
            thens,
            provenance: Provenance::User,
            created_at: time::epoch(),
            session_id: None,
        }
    }

    pub fn with_id(mut self, id: impl Into<RuleId>) -> Rule {
        self.id = id.into();
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Rule {
        self.provenance = provenance;
        self
    }

    pub fn with_created_at(mut self, at: Timestamp) -> Rule {
        self.created_at = at;
        self
    }

    /// Only rules with at least one IF and one THEN can run.
    pub fn is_executable(&self) -> bool {
        !self.ifs.is_empty() && !self.thens.is_empty()
    }

    pub fn clauses(&self, kind: ClauseKind) -> &[Clause] {
        match kind {
            ClauseKind::Sensor => &self.ifs,
            ClauseKind::Effector => &self.thens,
        }
    }

    pub fn owners(&self, kind: ClauseKind) -> BTreeSet<&str> {
        self.clauses(kind).iter().map(|c| c.owner_id.as_str()).collect()
    }

    pub fn canonical(&self) -> CanonicalForm {
        CanonicalForm {
            ifs: canonical_clauses(&self.ifs),
            thens: canonical_clauses(&self.thens),
        }
    }

    pub fn canonically_eq(&self, other: &Rule) -> bool {
        self.canonical() == other.canonical()
    }
}

impl From<String> for RuleId {
    fn from(s: String) -> RuleId {
        RuleId(s)
    }
}

/// Normalizes a value for comparison: trimmed, lowercased, and `H:MM`
/// times zero-padded. Wire bytes are never rewritten with this.
pub fn canonical_value(value: &str, input_type: InputType) -> String {
    let v = value.trim();
    if input_type == InputType::Time {
        if let Some(t) = time::parse_hhmm(v) {
            return time::format_hhmm(t);
        }
    }
    v.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalBinding {
    pub attr_id: String,
    pub value: String,
    pub input_type: InputType,
    pub wire_type: InputType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalClause {
    pub kind: ClauseKind,
    pub owner_id: String,
    pub condition_id: String,
    pub bindings: Vec<CanonicalBinding>,
}

impl CanonicalClause {
    pub fn value(&self, attr_id: &str) -> &str {
        self.bindings
            .iter()
            .find(|b| b.attr_id == attr_id)
            .map(|b| b.value.as_str())
            .unwrap_or("")
    }

    pub fn to_clause(&self) -> Clause {
        Clause {
            kind: self.kind,
            owner_id: self.owner_id.clone(),
            condition_id: self.condition_id.clone(),
            bindings: self
                .bindings
                .iter()
                .map(|b| AttributeBinding {
                    attr_id: b.attr_id.clone(),
                    value: b.value.clone(),
                    input_type: b.input_type,
                    wire_type: b.wire_type,
                })
                .collect(),
        }
    }
}

/// Order-insensitive, case-insensitive normal form of a rule's clauses.
/// Blank bindings are dropped and duplicate clauses collapse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalForm {
    pub ifs: Vec<CanonicalClause>,
    pub thens: Vec<CanonicalClause>,
}

impl CanonicalForm {
    pub fn to_rule(&self) -> Rule {
        Rule::new(
            self.ifs.iter().map(CanonicalClause::to_clause).collect(),
            self.thens.iter().map(CanonicalClause::to_clause).collect(),
        )
    }
}

pub fn canonical_clause(clause: &Clause) -> CanonicalClause {
    let mut bindings: Vec<CanonicalBinding> = clause
        .bindings
        .iter()
        .filter(|b| !b.value.trim().is_empty())
        .map(|b| CanonicalBinding {
            attr_id: b.attr_id.clone(),
            value: canonical_value(&b.value, b.input_type),
            input_type: b.input_type,
            wire_type: b.wire_type,
        })
        .collect();
    bindings.sort();
    bindings.dedup();
    CanonicalClause {
        kind: clause.kind,
        owner_id: clause.owner_id.clone(),
        condition_id: clause.condition_id.clone(),
        bindings,
    }
}

fn canonical_clauses(clauses: &[Clause]) -> Vec<CanonicalClause> {
    let mut out: Vec<CanonicalClause> = clauses.iter().map(canonical_clause).collect();
    out.sort();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// Wire format

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAttribute {
    pub name: String,
    pub value: String,
    #[serde(rename = "type")]
    pub input_type: InputType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireClause {
    pub name: String,
    pub condition: String,
    pub attributes: Vec<WireAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRule {
    #[serde(rename = "if")]
    pub ifs: Vec<WireClause>,
    #[serde(rename = "then")]
    pub thens: Vec<WireClause>,
}

impl WireRule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("wire rule serializes")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("wire rule serializes")
    }
}

pub fn encode_clause(clause: &Clause) -> WireClause {
    WireClause {
        name: clause.owner_id.clone(),
        condition: clause.condition_id.clone(),
        attributes: clause
            .bindings
            .iter()
            .filter(|b| !b.value.is_empty())
            .map(|b| WireAttribute {
                name: b.attr_id.clone(),
                value: b.value.clone(),
                input_type: b.wire_type,
            })
            .collect(),
    }
}

pub fn encode_rule(rule: &Rule) -> WireRule {
    WireRule {
        ifs: rule.ifs.iter().map(encode_clause).collect(),
        thens: rule.thens.iter().map(encode_clause).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unknown sensor or effector `{0}`")]
    UnknownName(String),
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{0}` given more than once")]
    DuplicateAttribute(String),
    #[error("type `{found}` does not match catalog type `{expected}`")]
    TypeMismatch { expected: InputType, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {kind}")]
pub struct DecodeError {
    pub path: String,
    pub kind: DecodeErrorKind,
}

impl DecodeError {
    fn at(path: impl Into<String>, kind: DecodeErrorKind) -> DecodeError {
        DecodeError { path: path.into(), kind }
    }

    fn lookup(path: &str, e: LookupError) -> DecodeError {
        let kind = match e {
            LookupError::UnknownSensor(id) | LookupError::UnknownEffector(id) => {
                DecodeErrorKind::UnknownName(id)
            }
            LookupError::UnknownTrigger { id, .. } | LookupError::UnknownAction { id, .. } => {
                DecodeErrorKind::UnknownCondition(id)
            }
        };
        DecodeError::at(path, kind)
    }
}

fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

fn expect_object<'a>(
    v: &'a Value,
    path: &str,
    allowed: &[&str],
) -> Result<&'a serde_json::Map<String, Value>, DecodeError> {
    let obj = v.as_object().ok_or_else(|| {
        DecodeError::at(path, DecodeErrorKind::Malformed("expected an object".into()))
    })?;
    if let Some(extra) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(DecodeError::at(join(path, extra), DecodeErrorKind::UnknownField(extra.clone())));
    }
    Ok(obj)
}

fn expect_str<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a str, DecodeError> {
    let p = join(path, key);
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(DecodeError::at(p, DecodeErrorKind::Malformed("expected a string".into()))),
        None => Err(DecodeError::at(p, DecodeErrorKind::Malformed("missing field".into()))),
    }
}

fn expect_array<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a [Value], DecodeError> {
    let p = join(path, key);
    match obj.get(key) {
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(DecodeError::at(p, DecodeErrorKind::Malformed("expected an array".into()))),
        None => Err(DecodeError::at(p, DecodeErrorKind::Malformed("missing field".into()))),
    }
}

/// Decodes one wire clause found at `path`.
pub fn decode_clause(
    doc: &Value,
    kind: ClauseKind,
    catalog: &Catalog,
    path: &str,
) -> Result<Clause, DecodeError> {
    let obj = expect_object(doc, path, &["name", "condition", "attributes"])?;
    let name = expect_str(obj, "name", path)?;
    let condition = expect_str(obj, "condition", path)?;
    let owner_known = match kind {
        ClauseKind::Sensor => catalog.sensor(name).is_some(),
        ClauseKind::Effector => catalog.effector(name).is_some(),
    };
    if !owner_known {
        return Err(DecodeError::at(join(path, "name"), DecodeErrorKind::UnknownName(name.into())));
    }
    let def = catalog
        .lookup(kind, name, condition)
        .map_err(|e| DecodeError::lookup(&join(path, "condition"), e))?;

    let attrs = match obj.get("attributes") {
        None => &[][..],
        Some(_) => expect_array(obj, "attributes", path)?,
    };
    let mut bindings = Vec::with_capacity(attrs.len());
    let mut seen = BTreeSet::new();
    for (i, raw) in attrs.iter().enumerate() {
        let apath = format!("{}[{i}]", join(path, "attributes"));
        let a = expect_object(raw, &apath, &["name", "value", "type"])?;
        let attr_id = expect_str(a, "name", &apath)?;
        let value = expect_str(a, "value", &apath)?;
        let wire = expect_str(a, "type", &apath)?;
        let attr = def.attribute(attr_id).ok_or_else(|| {
            DecodeError::at(join(&apath, "name"), DecodeErrorKind::UnknownAttribute(attr_id.into()))
        })?;
        if !seen.insert(attr_id) {
            return Err(DecodeError::at(
                join(&apath, "name"),
                DecodeErrorKind::DuplicateAttribute(attr_id.into()),
            ));
        }
        if InputType::parse(wire) != Some(attr.wire_type()) {
            return Err(DecodeError::at(
                join(&apath, "type"),
                DecodeErrorKind::TypeMismatch { expected: attr.wire_type(), found: wire.into() },
            ));
        }
        bindings.push(AttributeBinding {
            attr_id: attr.id.clone(),
            value: value.to_string(),
            input_type: attr.input_type,
            wire_type: attr.wire_type(),
        });
    }
    Ok(Clause {
        kind,
        owner_id: name.to_string(),
        condition_id: condition.to_string(),
        bindings,
    })
}

/// Decodes a bare rule document. Metadata gets neutral defaults.
pub fn decode_rule(doc: &Value, catalog: &Catalog) -> Result<Rule, DecodeError> {
    let obj = expect_object(doc, "", &["if", "then"])?;
    let mut sides = [Vec::new(), Vec::new()];
    for (slot, kind) in [ClauseKind::Sensor, ClauseKind::Effector].into_iter().enumerate() {
        for (i, raw) in expect_array(obj, kind.side(), "")?.iter().enumerate() {
            sides[slot].push(decode_clause(raw, kind, catalog, &format!("{}[{i}]", kind.side()))?);
        }
    }
    let [ifs, thens] = sides;
    Ok(Rule::new(ifs, thens))
}

pub fn decode_rule_str(text: &str, catalog: &Catalog) -> Result<Rule, DecodeError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| DecodeError::at("", DecodeErrorKind::Malformed(e.to_string())))?;
    decode_rule(&doc, catalog)
}

/// A rule document plus the metadata the wire format leaves out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleEnvelope {
    pub rule_id: String,
    pub provenance: Provenance,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub rule: WireRule,
}

impl RuleEnvelope {
    pub fn from_rule(rule: &Rule) -> RuleEnvelope {
        RuleEnvelope {
            rule_id: rule.id.0.clone(),
            provenance: rule.provenance,
            created_at: rule.created_at,
            session_id: rule.session_id.clone(),
            rule: encode_rule(rule),
        }
    }
}

/// Decodes either a bare rule document or a [`RuleEnvelope`].
pub fn decode_document(doc: &Value, catalog: &Catalog) -> Result<Rule, DecodeError> {
    let Some(obj) = doc.as_object() else {
        return Err(DecodeError::at("", DecodeErrorKind::Malformed("expected an object".into())));
    };
    if !obj.contains_key("rule") {
        return decode_rule(doc, catalog);
    }
    let allowed = ["rule_id", "provenance", "created_at", "session_id", "rule"];
    expect_object(doc, "", &allowed)?;
    let meta = |key: &str| -> Result<Value, DecodeError> {
        obj.get(key).cloned().ok_or_else(|| {
            DecodeError::at(key, DecodeErrorKind::Malformed("missing field".into()))
        })
    };
    let parse = |key: &str| -> DecodeError {
        DecodeError::at(key, DecodeErrorKind::Malformed("invalid value".into()))
    };
    let id: String = serde_json::from_value(meta("rule_id")?).map_err(|_| parse("rule_id"))?;
    let provenance: Provenance =
        serde_json::from_value(meta("provenance")?).map_err(|_| parse("provenance"))?;
    let created_at: Timestamp =
        serde_json::from_value(meta("created_at")?).map_err(|_| parse("created_at"))?;
    let session_id: Option<String> = match obj.get("session_id") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(|_| parse("session_id"))?),
    };
    let mut rule = decode_rule(&obj["rule"], catalog).map_err(|mut e| {
        e.path = join("rule", &e.path);
        e
    })?;
    rule.id = RuleId(id);
    rule.provenance = provenance;
    rule.created_at = created_at;
    rule.session_id = session_id;
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use serde_json::json;

    fn weather(day: &str, forecast: &str) -> Clause {
        Clause::bind(
            &fixtures::default_catalog(),
            ClauseKind::Sensor,
            "if-weather",
            "if-weather-forecast",
            &[("if-weather-forecast-day", day), ("if-weather-forecast-condition", forecast)],
        )
        .unwrap()
    }

    fn calendar() -> Clause {
        Clause::bind(
            &fixtures::default_catalog(),
            ClauseKind::Sensor,
            "if-calendar",
            "if-calendar-future",
            &[("if-calendar-future-type", "Meeting")],
        )
        .unwrap()
    }

    #[test]
    fn clause_order_does_not_matter() {
        let a = Rule::new(vec![calendar(), weather("Tomorrow", "Snow")], vec![]);
        let b = Rule::new(vec![weather("Tomorrow", "Snow"), calendar()], vec![]);
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn select_values_normalize() {
        let a = Rule::new(vec![weather("Tomorrow", " Snow ")], vec![]);
        let b = Rule::new(vec![weather("tomorrow", "snow")], vec![]);
        assert_eq!(a.canonical(), b.canonical());
        let c = Rule::new(vec![weather("tomorrow", "rain")], vec![]);
        assert_ne!(a.canonical(), c.canonical());
    }

    #[test]
    fn blank_equals_absent() {
        let a = Rule::new(vec![weather("", "Snow")], vec![]);
        let mut b = Rule::new(vec![weather("Tomorrow", "Snow")], vec![]);
        b.ifs[0].bindings.retain(|x| x.attr_id != "if-weather-forecast-day");
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(encode_rule(&a).ifs[0].attributes.len(), 1);
    }

    #[test]
    fn time_values_are_padded() {
        assert_eq!(canonical_value("7:00", InputType::Time), "07:00");
        assert_eq!(canonical_value(" 07:00", InputType::Time), "07:00");
        assert_eq!(canonical_value("Stelers", InputType::Text), "stelers");
    }

    #[test]
    fn decode_reports_paths() {
        let c = fixtures::default_catalog();
        let doc = json!({"if": [{"name": "if-weather", "condition": "if-weather-bogus", "attributes": []}], "then": []});
        let err = decode_rule(&doc, &c).unwrap_err();
        assert_eq!(err.path, "if[0].condition");
        assert_eq!(err.kind, DecodeErrorKind::UnknownCondition("if-weather-bogus".into()));

        let doc = json!({"if": [{"name": "if-fridge", "condition": "x", "attributes": []}], "then": []});
        assert_eq!(decode_rule(&doc, &c).unwrap_err().path, "if[0].name");

        let doc = json!({"if": [], "then": [{"name": "then-alarm", "condition": "then-alarm-send",
            "attributes": [{"name": "then-alarm-send-time", "value": "07:00", "type": "time"}]}]});
        let err = decode_rule(&doc, &c).unwrap_err();
        assert_eq!(err.path, "then[0].attributes[0].type");
        assert!(matches!(err.kind, DecodeErrorKind::TypeMismatch { .. }));

        let doc = json!({"if": [], "then": [], "else": []});
        assert_eq!(decode_rule(&doc, &c).unwrap_err().kind, DecodeErrorKind::UnknownField("else".into()));

        let doc = json!({"if": [], "then": [{"name": "then-alarm", "condition": "then-alarm-send",
            "attributes": [], "priority": 1}]});
        assert_eq!(decode_rule(&doc, &c).unwrap_err().path, "then[0].priority");

        // a sensor on the THEN side is not an effector
        let doc = json!({"if": [], "then": [{"name": "if-weather", "condition": "if-weather-forecast", "attributes": []}]});
        assert_eq!(decode_rule(&doc, &c).unwrap_err().path, "then[0].name");
    }

    #[test]
    fn duplicate_attribute_rejected() {
        let c = fixtures::default_catalog();
        let a = json!({"name": "if-weather-forecast-day", "value": "Today", "type": "select"});
        let doc = json!({"if": [{"name": "if-weather", "condition": "if-weather-forecast", "attributes": [a, a]}], "then": []});
        let err = decode_rule(&doc, &c).unwrap_err();
        assert_eq!(err.path, "if[0].attributes[1].name");
    }

    #[test]
    fn empty_document_is_not_executable() {
        let c = fixtures::default_catalog();
        let rule = decode_rule(&json!({"if": [], "then": []}), &c).unwrap();
        assert!(!rule.is_executable());
    }

    #[test]
    fn envelope_round_trip() {
        let c = fixtures::default_catalog();
        let rule = Rule::new(vec![weather("Tomorrow", "Snow")], vec![])
            .with_id("r-1")
            .with_provenance(Provenance::CrowdVoting);
        let env = serde_json::to_value(RuleEnvelope::from_rule(&rule)).unwrap();
        let back = decode_document(&env, &c).unwrap();
        assert_eq!(back, rule);
        let bare = decode_document(&encode_rule(&rule).to_value(), &c).unwrap();
        assert!(bare.canonically_eq(&rule));
    }

    #[test]
    fn provenance_colors() {
        assert_eq!(Provenance::Crowd.color(), "blue");
        assert_eq!(Provenance::CrowdVoting.color(), "blue");
        assert_eq!(Provenance::CrowdEditedByUser.color(), "green");
        assert_eq!(Provenance::User.color(), "green");
    }
}
