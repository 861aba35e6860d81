//! Structural and semantic validation of a rule before it is stored.
//!
//! Findings are collected, never thrown. Checks run in a fixed order:
//! catalog membership and typing, select options, time syntax, semantic
//! constraint hooks, executability, and finally the advisory warnings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::{AttributeDef, AttributeRole, Catalog, Definition, InputType, LookupError};
use crate::rule::{canonical_clause, Clause, ClauseKind, Rule};
use crate::time::{self, DaySpec, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub path: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

#[derive(Default)]
struct Findings(Vec<Issue>);

impl Findings {
    fn error(&mut self, path: impl Into<String>, code: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, path.into(), code.into(), message.into());
    }

    fn warn(&mut self, path: impl Into<String>, code: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, path.into(), code.into(), message.into());
    }

    fn push(&mut self, severity: Severity, path: String, code: String, message: String) {
        self.0.push(Issue { severity, path, code, message });
    }
}

/// Validates a lone clause: every rule-level check except executability.
pub fn validate_clause(clause: &Clause, catalog: &Catalog, now: Timestamp) -> ValidationReport {
    let rule = match clause.kind {
        ClauseKind::Sensor => Rule::new(vec![clause.clone()], Vec::new()),
        ClauseKind::Effector => Rule::new(Vec::new(), vec![clause.clone()]),
    };
    let mut report = validate_rule(&rule, catalog, now);
    report.issues.retain(|i| i.code != "empty-if" && i.code != "empty-then");
    report.ok = !report.issues.iter().any(|i| i.severity == Severity::Error);
    report
}

/// Validates `rule` against `catalog`, judging time constraints from `now`.
pub fn validate_rule(rule: &Rule, catalog: &Catalog, now: Timestamp) -> ValidationReport {
    let mut found = Findings::default();
    let sides = [(ClauseKind::Sensor, &rule.ifs), (ClauseKind::Effector, &rule.thens)];

    let mut resolved: Vec<(String, &Clause, Definition<'_>)> = Vec::new();
    for (kind, clauses) in sides {
        for (i, clause) in clauses.iter().enumerate() {
            let path = format!("{}[{i}]", kind.side());
            if let Some(def) = check_membership(clause, kind, catalog, &path, &mut found) {
                resolved.push((path, clause, def));
            }
        }
    }

    for (path, clause, def) in &resolved {
        for (j, b) in clause.bindings.iter().enumerate() {
            let Some(attr) = def.attribute(&b.attr_id) else { continue };
            let value = b.value.trim();
            if value.is_empty() || attr.input_type != InputType::Select {
                continue;
            }
            if attr.option(value).is_none() {
                found.error(
                    format!("{path}.attributes[{j}].value"),
                    "invalid-option",
                    format!("`{value}` is not one of {}", attr.options.join(", ")),
                );
            }
        }
    }

    for (path, clause, def) in &resolved {
        for (j, b) in clause.bindings.iter().enumerate() {
            let Some(attr) = def.attribute(&b.attr_id) else { continue };
            let value = b.value.trim();
            if !value.is_empty() && attr.input_type == InputType::Time && time::parse_hhmm(value).is_none() {
                found.error(
                    format!("{path}.attributes[{j}].value"),
                    "invalid-time",
                    format!("`{value}` is not an HH:MM time"),
                );
            }
        }
    }

    for (path, clause, def) in &resolved {
        check_constraints(clause, *def, path, now, &mut found);
    }

    if rule.ifs.is_empty() {
        found.error("if", "empty-if", "a rule needs at least one IF clause");
    }
    if rule.thens.is_empty() {
        found.error("then", "empty-then", "a rule needs at least one THEN clause");
    }

    for (path, clause, def) in &resolved {
        let has_slots = !def.attributes().is_empty();
        if has_slots && clause.bindings.iter().all(|b| b.value.trim().is_empty()) {
            found.warn(path.clone(), "all-blank", "every attribute is blank; the clause matches anything");
        }
    }
    for (kind, clauses) in sides {
        let mut seen = BTreeSet::new();
        for (i, clause) in clauses.iter().enumerate() {
            if !seen.insert(canonical_clause(clause)) {
                found.warn(
                    format!("{}[{i}]", kind.side()),
                    "duplicate-clause",
                    "clause repeats an earlier one",
                );
            }
        }
    }

    let issues = found.0;
    ValidationReport { ok: !issues.iter().any(|i| i.severity == Severity::Error), issues }
}

fn check_membership<'c>(
    clause: &Clause,
    side: ClauseKind,
    catalog: &'c Catalog,
    path: &str,
    found: &mut Findings,
) -> Option<Definition<'c>> {
    if clause.kind != side {
        found.error(
            path,
            "wrong-side",
            format!("a {:?} clause cannot appear under `{}`", clause.kind, side.side()),
        );
        return None;
    }
    let def = match catalog.lookup(side, &clause.owner_id, &clause.condition_id) {
        Ok(def) => def,
        Err(e @ (LookupError::UnknownSensor(_) | LookupError::UnknownEffector(_))) => {
            found.error(format!("{path}.name"), "unknown-owner", e.to_string());
            return None;
        }
        Err(e) => {
            found.error(format!("{path}.condition"), "unknown-condition", e.to_string());
            return None;
        }
    };
    let mut seen = BTreeSet::new();
    for (j, b) in clause.bindings.iter().enumerate() {
        let apath = format!("{path}.attributes[{j}]");
        let Some(attr) = def.attribute(&b.attr_id) else {
            found.error(
                format!("{apath}.name"),
                "unknown-attribute",
                format!("`{}` has no attribute `{}`", def.id(), b.attr_id),
            );
            continue;
        };
        if !seen.insert(b.attr_id.as_str()) {
            found.error(
                format!("{apath}.name"),
                "duplicate-attribute",
                format!("`{}` is bound more than once", b.attr_id),
            );
        }
        if b.input_type != attr.input_type || b.wire_type != attr.wire_type() {
            found.error(
                format!("{apath}.type"),
                "type-mismatch",
                format!("catalog declares `{}` as {}", attr.id, attr.input_type),
            );
        }
    }
    for attr in def.attributes().iter().filter(|a| a.required) {
        if clause.value(&attr.id).trim().is_empty() {
            found.error(
                path,
                "missing-required",
                format!("`{}` must not be blank", attr.id),
            );
        }
    }
    Some(def)
}

fn short_owner(owner_id: &str) -> &str {
    owner_id
        .strip_prefix("if-")
        .or_else(|| owner_id.strip_prefix("then-"))
        .unwrap_or(owner_id)
}

fn check_constraints(clause: &Clause, def: Definition<'_>, path: &str, now: Timestamp, found: &mut Findings) {
    let mut occurrences: Vec<(AttributeRole, Timestamp)> = Vec::new();
    for (j, b) in clause.bindings.iter().enumerate() {
        let Some(attr) = def.attribute(&b.attr_id) else { continue };
        let Some(constraint) = attr.constraint.as_deref() else { continue };
        let value = b.value.trim();
        if value.is_empty() {
            continue;
        }
        let vpath = format!("{path}.attributes[{j}].value");
        match constraint {
            "future-datetime" => {
                if let Some(at) = occurrence(clause, def, attr, now) {
                    let role = attr.role.unwrap_or(AttributeRole::Time);
                    occurrences.push((role, at));
                    if at <= now {
                        found.error(
                            vpath,
                            past_code(&clause.owner_id, role),
                            format!("{value} on that day is not later than {}", now.format("%Y-%m-%d %H:%M")),
                        );
                    }
                }
            }
            "non-negative-integer" => {
                if value.parse::<u64>().is_err() {
                    found.error(vpath, "invalid-number", format!("`{value}` is not a non-negative integer"));
                }
            }
            "non-negative-number" => {
                let ok = value.parse::<f64>().map(|v| v.is_finite() && v >= 0.0).unwrap_or(false);
                if !ok {
                    found.error(vpath, "invalid-number", format!("`{value}` is not a non-negative number"));
                }
            }
            other => found.warn(vpath, "unknown-constraint", format!("no check is registered for `{other}`")),
        }
    }
    let start = occurrences.iter().find(|(r, _)| *r == AttributeRole::Start);
    let end = occurrences.iter().find(|(r, _)| *r == AttributeRole::End);
    if let (Some((_, s)), Some((_, e))) = (start, end) {
        if e < s {
            found.error(
                path,
                format!("{}-end-before-start", short_owner(&clause.owner_id)),
                "end time precedes start time",
            );
        }
    }
}

fn past_code(owner_id: &str, role: AttributeRole) -> String {
    let owner = short_owner(owner_id);
    match role {
        AttributeRole::Start => format!("{owner}-start-in-past"),
        AttributeRole::End => format!("{owner}-end-in-past"),
        _ => format!("{owner}-in-past"),
    }
}

/// Combines a time attribute with the clause's day attribute. A blank or
/// open-ended day has no single occurrence and is not checked.
fn occurrence(clause: &Clause, def: Definition<'_>, attr: &AttributeDef, now: Timestamp) -> Option<Timestamp> {
    let t = time::parse_hhmm(clause.value(&attr.id))?;
    let day_attr = def.attribute_with_role(AttributeRole::Day)?;
    let day = DaySpec::parse(clause.value(&day_attr.id))?;
    day.occurrence(t, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rule::{decode_rule_str, AttributeBinding};

    fn at(s: &str) -> Timestamp {
        time::parse_timestamp(s).unwrap()
    }

    fn calendar(day: &str, start: &str, end: &str) -> Clause {
        Clause::bind(
            &fixtures::default_catalog(),
            ClauseKind::Sensor,
            "if-calendar",
            "if-calendar-future",
            &[("if-calendar-future-day", day), ("if-calendar-future-start", start), ("if-calendar-future-end", end)],
        )
        .unwrap()
    }

    fn notify() -> Clause {
        Clause::bind(
            &fixtures::default_catalog(),
            ClauseKind::Effector,
            "then-notification",
            "then-notification-send",
            &[("then-notification-send-content", "hi")],
        )
        .unwrap()
    }

    #[test]
    fn listing_rule_is_valid() {
        let c = fixtures::default_catalog();
        let rule = decode_rule_str(fixtures::LISTING_RULE, &c).unwrap();
        let report = validate_rule(&rule, &c, at("2018-01-01T00:00"));
        assert!(report.ok, "{report:?}");
    }

    #[test]
    fn calendar_start_in_past() {
        let c = fixtures::default_catalog();
        let rule = Rule::new(vec![calendar("Today", "07:00", "")], vec![notify()]);
        let report = validate_rule(&rule, &c, at("2018-01-01T09:00"));
        assert!(!report.ok);
        assert!(report.has_code("calendar-start-in-past"));
        assert_eq!(report.errors().count(), 1);
        let later = validate_rule(&rule, &c, at("2018-01-01T06:00"));
        assert!(later.ok, "{later:?}");
    }

    #[test]
    fn end_before_start() {
        let c = fixtures::default_catalog();
        let rule = Rule::new(vec![calendar("Tomorrow", "10:00", "09:00")], vec![notify()]);
        let report = validate_rule(&rule, &c, at("2018-01-01T09:00"));
        assert!(report.has_code("calendar-end-before-start"));
    }

    #[test]
    fn clock_is_exempt_from_past_checks() {
        let c = fixtures::default_catalog();
        let clock = Clause::bind(
            &c,
            ClauseKind::Sensor,
            "if-clock",
            "if-clock-current",
            &[("if-clock-current-comparator", "After"), ("if-clock-current-time", "07:00")],
        )
        .unwrap();
        let report = validate_rule(&Rule::new(vec![clock], vec![notify()]), &c, at("2018-01-01T09:00"));
        assert!(report.ok, "{report:?}");
    }

    #[test]
    fn empty_sides_and_bad_values() {
        let c = fixtures::default_catalog();
        let report = validate_rule(&Rule::new(vec![calendar("Today", "", "")], vec![]), &c, at("2018-01-01T00:00"));
        assert!(report.has_code("empty-then"));
        assert!(!report.has_code("empty-if"));

        let bad = calendar("Someday", "25:00", "");
        let report = validate_rule(&Rule::new(vec![bad], vec![notify()]), &c, at("2018-01-01T00:00"));
        assert!(report.has_code("invalid-option"));
        assert!(report.has_code("invalid-time"));
    }

    #[test]
    fn all_blank_is_a_warning() {
        let c = fixtures::default_catalog();
        let report = validate_rule(&Rule::new(vec![calendar("", "", "")], vec![notify()]), &c, at("2018-01-01T00:00"));
        assert!(report.ok);
        assert!(report.has_code("all-blank"));
    }

    #[test]
    fn hand_built_type_mismatch_is_reported() {
        let c = fixtures::default_catalog();
        let mut clause = notify();
        clause.bindings.push(AttributeBinding {
            attr_id: "then-notification-send-content".into(),
            value: "again".into(),
            input_type: InputType::Select,
            wire_type: InputType::Select,
        });
        let report = validate_rule(&Rule::new(vec![calendar("", "", "")], vec![clause]), &c, at("2018-01-01T00:00"));
        assert!(report.has_code("duplicate-attribute"));
        assert!(report.has_code("type-mismatch"));
        assert_eq!(report.errors().next().unwrap().path, "then[0].attributes[1].name");
    }

    #[test]
    fn negative_minutes_rejected() {
        let c = fixtures::default_catalog();
        let bus = Clause::bind(
            &c,
            ClauseKind::Sensor,
            "if-bus",
            "if-bus-future",
            &[("if-bus-future-minutes", "-2")],
        )
        .unwrap();
        let report = validate_rule(&Rule::new(vec![bus], vec![notify()]), &c, at("2018-01-01T00:00"));
        assert!(report.has_code("invalid-number"));
    }
}
