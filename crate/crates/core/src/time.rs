//! Wall-clock helpers shared by the validator, the engine and the simulator.
//!
//! All timestamps are naive local times: the platform runs on an injected,
//! simulated clock and never consults the host time zone.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};

pub type Timestamp = NaiveDateTime;

/// Parses `HH:MM` (a single-digit hour is tolerated).
pub fn parse_hhmm(s: &str) -> Option<NaiveTime> {
    let (h, m) = s.trim().split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    if !h.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    NaiveTime::from_hms_opt(h.parse().ok()?, m.parse().ok()?, 0)
}

pub fn format_hhmm(t: NaiveTime) -> String {
    t.format("%H:%M").to_string()
}

/// Accepts `YYYY-MM-DDTHH:MM[:SS]` or a space instead of the `T`.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

pub fn epoch() -> Timestamp {
    NaiveDate::from_ymd_opt(1970, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch")
}

/// A value of a `Day` select attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaySpec {
    Today,
    Tomorrow,
    Weekday(Weekday),
    Any,
}

impl DaySpec {
    pub fn parse(s: &str) -> Option<DaySpec> {
        let v = s.trim().to_ascii_lowercase();
        let day = match v.as_str() {
            "today" => DaySpec::Today,
            "tomorrow" => DaySpec::Tomorrow,
            "any" => DaySpec::Any,
            "monday" => DaySpec::Weekday(Weekday::Mon),
            "tuesday" => DaySpec::Weekday(Weekday::Tue),
            "wednesday" => DaySpec::Weekday(Weekday::Wed),
            "thursday" => DaySpec::Weekday(Weekday::Thu),
            "friday" => DaySpec::Weekday(Weekday::Fri),
            "saturday" => DaySpec::Weekday(Weekday::Sat),
            "sunday" => DaySpec::Weekday(Weekday::Sun),
            _ => return None,
        };
        Some(day)
    }

    /// Does `date` fall on this day, seen from `today`? Weekdays look at most
    /// six days ahead; `Any` matches every date from today on.
    pub fn matches(self, date: NaiveDate, today: NaiveDate) -> bool {
        let ahead = (date - today).num_days();
        match self {
            DaySpec::Today => ahead == 0,
            DaySpec::Tomorrow => ahead == 1,
            DaySpec::Weekday(w) => (0..7).contains(&ahead) && date.weekday() == w,
            DaySpec::Any => ahead >= 0,
        }
    }

    /// The next date-time this day/time pair denotes, seen from `now`.
    ///
    /// `Today` and `Tomorrow` are fixed dates and may lie in the past; a
    /// weekday rolls over to the following week once its time has passed.
    /// `Any` has no single occurrence.
    pub fn occurrence(self, time: NaiveTime, now: Timestamp) -> Option<Timestamp> {
        let today = now.date();
        match self {
            DaySpec::Today => Some(today.and_time(time)),
            DaySpec::Tomorrow => Some((today + Duration::days(1)).and_time(time)),
            DaySpec::Weekday(w) => {
                let mut ahead = (7 + w.num_days_from_monday() as i64
                    - today.weekday().num_days_from_monday() as i64)
                    % 7;
                if ahead == 0 && today.and_time(time) <= now {
                    ahead = 7;
                }
                Some((today + Duration::days(ahead)).and_time(time))
            }
            DaySpec::Any => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn hhmm_parsing() {
        assert_eq!(parse_hhmm("07:00"), NaiveTime::from_hms_opt(7, 0, 0));
        assert_eq!(parse_hhmm("7:05"), NaiveTime::from_hms_opt(7, 5, 0));
        assert_eq!(parse_hhmm(" 23:59 "), NaiveTime::from_hms_opt(23, 59, 0));
        for bad in ["24:00", "7", "07:0", "ab:cd", "", "07:60", "-1:00", "007:00"] {
            assert_eq!(parse_hhmm(bad), None, "{bad}");
        }
    }

    #[test]
    fn timestamps() {
        assert_eq!(ts("2018-01-01T00:00"), ts("2018-01-01 00:00:00"));
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn day_occurrences() {
        // 2018-01-01 is a Monday
        let now = ts("2018-01-01T09:00");
        let seven = parse_hhmm("07:00").unwrap();
        assert_eq!(DaySpec::Today.occurrence(seven, now), Some(ts("2018-01-01T07:00")));
        assert_eq!(DaySpec::Tomorrow.occurrence(seven, now), Some(ts("2018-01-02T07:00")));
        assert_eq!(
            DaySpec::Weekday(Weekday::Mon).occurrence(seven, now),
            Some(ts("2018-01-08T07:00"))
        );
        assert_eq!(
            DaySpec::Weekday(Weekday::Wed).occurrence(seven, now),
            Some(ts("2018-01-03T07:00"))
        );
        assert_eq!(DaySpec::Any.occurrence(seven, now), None);
    }

    #[test]
    fn day_matching() {
        let today = ts("2018-01-01T00:00").date();
        let tomorrow = today + Duration::days(1);
        assert!(DaySpec::Tomorrow.matches(tomorrow, today));
        assert!(!DaySpec::Today.matches(tomorrow, today));
        assert!(DaySpec::Weekday(Weekday::Tue).matches(tomorrow, today));
        assert!(DaySpec::Any.matches(tomorrow, today));
        assert!(!DaySpec::Any.matches(today - Duration::days(1), today));
        assert_eq!(DaySpec::parse(" TOMORROW "), Some(DaySpec::Tomorrow));
        assert_eq!(DaySpec::parse("someday"), None);
    }
}
