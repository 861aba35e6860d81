//! Per-trigger predicates evaluated against sensor readings.
//!
//! Each reading is the JSON environment a sensor reported for one trigger.
//! Blank attributes are wildcards. Text comparisons ignore case and
//! surrounding whitespace; a text pattern also matches when it is contained
//! in the reported value ("Washington St" matches "Washington St.").

use chrono::{Duration, NaiveDate, NaiveTime};
use serde_json::Value;

use crate::rule::Clause;
use crate::time::{self, DaySpec, Timestamp};

/// What a satisfied clause saw: the people it mentions, for effectors that
/// address "people mentioned in the IF".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Match {
    pub persons: Vec<String>,
}

/// `None` when the clause does not hold.
pub fn clause_satisfied(clause: &Clause, env: Option<&Value>, now: Timestamp) -> Option<Match> {
    let v = |attr: &str| clause.value(&format!("{}-{attr}", clause.condition_id)).trim().to_string();
    let empty = Match::default();
    match clause.condition_id.as_str() {
        "if-clock-current" => {
            let t = time::parse_hhmm(&v("time"))?;
            let current = clock_time(env, now);
            let minute = |t: NaiveTime| t.format("%H:%M").to_string();
            let holds = match v("comparator").to_ascii_lowercase().as_str() {
                "before" => current < t,
                "after" => current > t,
                _ => minute(current) == minute(t),
            };
            holds.then_some(empty)
        }
        "if-bus-current" => items(env?, "buses")
            .any(|b| text_matches(&v("number"), field(b, "number")) && text_matches(&v("stop"), field(b, "stop")))
            .then_some(empty),
        "if-bus-future" => {
            let limit = v("minutes");
            let limit: Option<f64> = if limit.is_empty() { None } else { Some(leading_number(&limit)?) };
            items(env?, "etas")
                .any(|b| {
                    text_matches(&v("number"), field(b, "number"))
                        && text_matches(&v("stop"), field(b, "stop"))
                        && match (limit, number(b.get("minutes"))) {
                            (None, _) => true,
                            (Some(l), Some(m)) => m <= l,
                            (Some(_), None) => false,
                        }
                })
                .then_some(empty)
        }
        "if-calendar-current" => items(env?, "events")
            .filter_map(Event::parse)
            .any(|e| type_matches(&v("type"), &e.kind) && e.start <= now && now < e.end)
            .then_some(empty),
        "if-calendar-future" => {
            let day = DaySpec::parse(&v("day"));
            if !v("day").is_empty() && day.is_none() {
                return None;
            }
            let start = time::parse_hhmm(&v("start"));
            let end = time::parse_hhmm(&v("end"));
            items(env?, "events")
                .filter_map(Event::parse)
                .any(|e| {
                    e.start > now
                        && day.is_none_or(|d| d.matches(e.start.date(), now.date()))
                        && type_matches(&v("type"), &e.kind)
                        && start.is_none_or(|s| s == e.start.time())
                        && end.is_none_or(|s| s == e.end.time())
                })
                .then_some(empty)
        }
        "if-calendar-relative" => {
            let within = v("minutes");
            let within = if within.is_empty() { None } else { Some(leading_number(&within)?) };
            items(env?, "events")
                .filter_map(Event::parse)
                .any(|e| {
                    let ahead = (e.start - now).num_seconds() as f64 / 60.0;
                    type_matches(&v("type"), &e.kind) && ahead >= 0.0 && within.is_none_or(|w| ahead <= w)
                })
                .then_some(empty)
        }
        "if-call-receive" => capture(items(env?, "calls"), &v("from"), |_| true),
        "if-email-receive" => capture(items(env?, "emails"), &v("from"), |_| true),
        "if-message-receive" => {
            let needle = v("contains").to_lowercase();
            capture(items(env?, "messages"), &v("from"), |m| {
                field(m, "text").to_lowercase().contains(&needle)
            })
        }
        "if-news-receive" => {
            let needle = v("title").to_lowercase();
            items(env?, "news")
                .any(|n| field(n, "title").to_lowercase().contains(&needle))
                .then_some(empty)
        }
        "if-gps-current" => text_matches(&v("location"), field(env?, "location")).then_some(empty),
        "if-gps-distance" => {
            let distances = env?.get("distances")?.as_object()?;
            let target = v("value");
            let target = if target.is_empty() { None } else { Some(leading_number(&target)?) };
            let comparator = v("comparator").to_ascii_lowercase();
            distances
                .iter()
                .filter(|(place, _)| text_matches(&v("to"), place))
                .filter_map(|(_, d)| d.as_f64())
                .any(|d| match target {
                    None => true,
                    Some(t) => match comparator.as_str() {
                        "is greater than" => d > t,
                        "is less than" => d < t,
                        "equals to" => (d - t).abs() < 1e-9,
                        _ => true,
                    },
                })
                .then_some(empty)
        }
        "if-phone-falls" => flag(env?, "falling").then_some(empty),
        "if-phone-drive" => flag(env?, "driving").then_some(empty),
        "if-weather-forecast" => {
            let day = DaySpec::parse(&v("day"));
            if !v("day").is_empty() && day.is_none() {
                return None;
            }
            let days = env?.get("days")?.as_object()?;
            days.iter()
                .filter_map(|(date, cond)| Some((NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?, cond.as_str()?)))
                .any(|(date, cond)| {
                    day.map_or(date >= now.date(), |d| d.matches(date, now.date()))
                        && text_equals(&v("condition"), cond)
                })
                .then_some(empty)
        }
        _ => generic(clause, env?),
    }
}

/// Fallback for triggers without a dedicated predicate: the reading is an
/// object (or a list of objects) keyed by attribute id.
fn generic(clause: &Clause, env: &Value) -> Option<Match> {
    let holds = |obj: &Value| {
        clause
            .bindings
            .iter()
            .all(|b| text_equals(&b.value, obj.get(&b.attr_id).and_then(Value::as_str).unwrap_or("")))
    };
    let ok = match env {
        Value::Array(list) => list.iter().any(holds),
        other => holds(other),
    };
    ok.then(Match::default)
}

struct Event {
    start: Timestamp,
    end: Timestamp,
    kind: String,
}

impl Event {
    fn parse(v: &Value) -> Option<Event> {
        let date = NaiveDate::parse_from_str(v.get("date")?.as_str()?, "%Y-%m-%d").ok()?;
        let start = date.and_time(time::parse_hhmm(v.get("start")?.as_str()?)?);
        let end = match v.get("end").and_then(Value::as_str).and_then(time::parse_hhmm) {
            Some(t) => date.and_time(t),
            None => start + Duration::hours(1),
        };
        let kind = v.get("type").and_then(Value::as_str).unwrap_or("").to_string();
        Some(Event { start, end, kind })
    }
}

fn clock_time(env: Option<&Value>, now: Timestamp) -> NaiveTime {
    env.and_then(|e| e.get("time"))
        .and_then(Value::as_str)
        .and_then(time::parse_hhmm)
        .unwrap_or_else(|| now.time())
}

fn items<'a>(env: &'a Value, key: &str) -> impl Iterator<Item = &'a Value> {
    env.get(key).and_then(Value::as_array).into_iter().flatten()
}

fn field<'a>(v: &'a Value, key: &str) -> &'a str {
    match v.get(key) {
        Some(Value::String(s)) => s,
        _ => "",
    }
}

fn number(v: Option<&Value>) -> Option<f64> {
    match v? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => leading_number(s),
        _ => None,
    }
}

fn flag(env: &Value, key: &str) -> bool {
    env.get(key).and_then(Value::as_bool).unwrap_or(false)
}

/// "30 miles" → 30.
pub fn leading_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    s[..end].parse().ok()
}

fn is_wildcard(pattern: &str) -> bool {
    matches!(
        pattern.trim().to_lowercase().as_str(),
        "" | "any" | "anyone" | "anybody" | "anyone who calls"
    )
}

fn text_equals(pattern: &str, actual: &str) -> bool {
    let p = pattern.trim();
    p.is_empty() || p.eq_ignore_ascii_case(actual.trim())
}

fn text_matches(pattern: &str, actual: &str) -> bool {
    let p = pattern.trim().to_lowercase();
    p.is_empty() || actual.to_lowercase().contains(&p)
}

fn type_matches(pattern: &str, actual: &str) -> bool {
    pattern.trim().eq_ignore_ascii_case("any") || text_equals(pattern, actual)
}

/// Inbound-communication triggers: every matching sender is captured.
fn capture<'a>(
    list: impl Iterator<Item = &'a Value>,
    from: &str,
    extra: impl Fn(&Value) -> bool,
) -> Option<Match> {
    let persons: Vec<String> = list
        .filter(|m| (is_wildcard(from) || text_equals(from, field(m, "from"))) && extra(m))
        .map(|m| field(m, "from").to_string())
        .collect();
    if persons.is_empty() {
        None
    } else {
        Some(Match { persons })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rule::ClauseKind;
    use serde_json::json;

    fn clause(owner: &str, condition: &str, values: &[(&str, &str)]) -> Clause {
        Clause::bind(&fixtures::default_catalog(), ClauseKind::Sensor, owner, condition, values).unwrap()
    }

    fn at(s: &str) -> Timestamp {
        time::parse_timestamp(s).unwrap()
    }

    #[test]
    fn clock_after() {
        let c = clause(
            "if-clock",
            "if-clock-current",
            &[("if-clock-current-comparator", "After"), ("if-clock-current-time", "17:00")],
        );
        assert!(clause_satisfied(&c, None, at("2018-01-01T17:05")).is_some());
        assert!(clause_satisfied(&c, None, at("2018-01-01T16:55")).is_none());
    }

    #[test]
    fn message_captures_sender() {
        let c = clause(
            "if-message",
            "if-message-receive",
            &[("if-message-receive-from", "Mom"), ("if-message-receive-contains", "grandfather")],
        );
        let env = json!({"messages": [{"from": "Mom", "text": "grandfather is fine"}]});
        let m = clause_satisfied(&c, Some(&env), at("2018-01-01T10:00")).unwrap();
        assert_eq!(m.persons, vec!["Mom"]);
        let env = json!({"messages": [{"from": "Dad", "text": "grandfather is fine"}]});
        assert!(clause_satisfied(&c, Some(&env), at("2018-01-01T10:00")).is_none());
    }

    #[test]
    fn gps_distance_comparison() {
        let c = clause(
            "if-gps",
            "if-gps-distance",
            &[
                ("if-gps-distance-to", "Home"),
                ("if-gps-distance-comparator", "Is Greater Than"),
                ("if-gps-distance-value", "30"),
            ],
        );
        let near = json!({"distances": {"Home": 12.0}});
        let far = json!({"distances": {"Home": 42.5}});
        assert!(clause_satisfied(&c, Some(&near), at("2018-01-01T10:00")).is_none());
        assert!(clause_satisfied(&c, Some(&far), at("2018-01-01T10:00")).is_some());
        assert!(clause_satisfied(&c, None, at("2018-01-01T10:00")).is_none());
    }

    #[test]
    fn weather_day_and_condition() {
        let c = clause(
            "if-weather",
            "if-weather-forecast",
            &[("if-weather-forecast-day", "Tomorrow"), ("if-weather-forecast-condition", "Snow")],
        );
        let env = json!({"days": {"2018-01-02": "Snow", "2018-01-01": "Clear"}});
        assert!(clause_satisfied(&c, Some(&env), at("2018-01-01T20:00")).is_some());
        assert!(clause_satisfied(&c, Some(&env), at("2018-01-02T08:00")).is_none());
    }

    #[test]
    fn calendar_future_event() {
        let c = clause(
            "if-calendar",
            "if-calendar-future",
            &[
                ("if-calendar-future-day", "Tomorrow"),
                ("if-calendar-future-type", "Meeting"),
                ("if-calendar-future-start", "09:00"),
            ],
        );
        let env = json!({"events": [{"date": "2018-01-02", "start": "09:00", "type": "Meeting"}]});
        assert!(clause_satisfied(&c, Some(&env), at("2018-01-01T20:00")).is_some());
        let dining = json!({"events": [{"date": "2018-01-02", "start": "09:00", "type": "Dining"}]});
        assert!(clause_satisfied(&c, Some(&dining), at("2018-01-01T20:00")).is_none());
    }

    #[test]
    fn bus_eta_threshold() {
        let c = clause(
            "if-bus",
            "if-bus-future",
            &[("if-bus-future-number", "53"), ("if-bus-future-stop", "Washington St"), ("if-bus-future-minutes", "5")],
        );
        let far = json!({"etas": [{"number": "53", "stop": "Washington St.", "minutes": 9}]});
        let near = json!({"etas": [{"number": "53", "stop": "Washington St.", "minutes": 4}]});
        assert!(clause_satisfied(&c, Some(&far), at("2018-01-01T17:00")).is_none());
        assert!(clause_satisfied(&c, Some(&near), at("2018-01-01T17:00")).is_some());
    }

    #[test]
    fn anyone_is_a_wildcard_sender() {
        let c = clause("if-call", "if-call-receive", &[("if-call-receive-from", "Anyone")]);
        let env = json!({"calls": [{"from": "Alice"}]});
        assert_eq!(clause_satisfied(&c, Some(&env), at("2018-01-01T10:00")).unwrap().persons, vec!["Alice"]);
    }

    #[test]
    fn numbers_with_units() {
        assert_eq!(leading_number("30 miles"), Some(30.0));
        assert_eq!(leading_number("2.5"), Some(2.5));
        assert_eq!(leading_number("miles"), None);
    }
}
