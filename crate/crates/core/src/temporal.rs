//! Timestamp parsing and rule-based temporal expression recognition.

use std::sync::OnceLock;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalKind {
    Absolute,
    Relative,
    Recurrence,
}

/// A temporal value recognised in free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalExpression {
    pub raw: String,
    pub kind: TemporalKind,
    /// `2023-05-08`, `2023-05`, `2023`, `last_week`, `3_days_ago`, `every:saturday`, ...
    pub normalized: String,
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

fn month_number(name: &str) -> Option<u32> {
    let name = name.to_lowercase();
    if name.len() < 3 {
        return None;
    }
    MONTHS
        .iter()
        .position(|m| m.starts_with(&name) || name.starts_with(m))
        .map(|i| i as u32 + 1)
}

/// Parse the timestamp formats seen in conversation corpora.
///
/// Accepts RFC 3339, `YYYY-MM-DD[ T]HH:MM[:SS]`, bare dates, and the
/// `1:56 pm on 8 May, 2023` style. Date-only values resolve to midnight.
pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(t) {
        return Some(dt.naive_utc());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, fmt) {
            return Some(dt);
        }
    }
    if let Some((time_part, date_part)) = t.split_once(" on ") {
        let date = parse_date(date_part)?;
        let time = NaiveTime::parse_from_str(&time_part.trim().to_uppercase(), "%I:%M %p").ok()?;
        return Some(date.and_time(time));
    }
    parse_date(t).map(|d| d.and_time(NaiveTime::MIN))
}

/// Parse a calendar date: ISO, `8 May, 2023`, `May 8, 2023` (with optional weekday/ordinals).
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return Some(d);
    }
    if t.len() > 10 && t.is_char_boundary(10) {
        if let Ok(d) = NaiveDate::parse_from_str(&t[..10], "%Y-%m-%d") {
            return Some(d);
        }
    }
    let caps = day_month_year_re().captures(t).map(|c| {
        (
            c.name("d1").or(c.name("d2")),
            c.name("m1").or(c.name("m2")),
            c.name("y"),
        )
    });
    if let Some((Some(d), Some(m), Some(y))) = caps {
        return NaiveDate::from_ymd_opt(
            y.as_str().parse().ok()?,
            month_number(m.as_str())?,
            d.as_str().parse().ok()?,
        );
    }
    None
}

fn month_alt() -> &'static str {
    r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)"
}

fn day_month_year_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let m = month_alt();
        Regex::new(&format!(
            r"(?i)\b(?:(?P<d1>\d{{1,2}})(?:st|nd|rd|th)?\s+(?P<m1>{m})|(?P<m2>{m})\s+(?P<d2>\d{{1,2}})(?:st|nd|rd|th)?),?\s+(?P<y>\d{{4}})\b"
        ))
        .expect("valid regex")
    })
}

struct Rules {
    iso_date: Regex,
    iso_month: Regex,
    month_year: Regex,
    year: Regex,
    relative_unit: Regex,
    ago: Regex,
    simple_relative: Regex,
    recurrence: Regex,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| {
        let m = month_alt();
        Rules {
            iso_date: Regex::new(r"\b(\d{4})-(\d{2})-(\d{2})\b").unwrap(),
            iso_month: Regex::new(r"\b(\d{4})-(\d{2})\b").unwrap(),
            month_year: Regex::new(&format!(r"(?i)\b({m}),?\s+(\d{{4}})\b")).unwrap(),
            year: Regex::new(r"\b(19\d{2}|20\d{2}|21\d{2})\b").unwrap(),
            relative_unit: Regex::new(
                r"(?i)\b(last|this|next)\s+(week|month|year|weekend|summer|winter|spring|fall)\b",
            )
            .unwrap(),
            ago: Regex::new(
                r"(?i)\b(\d+|a|an|one|two|three|four|five|six|seven|eight|nine|ten|a few|few|several)\s+(days?|weeks?|months?|years?)\s+ago\b",
            )
            .unwrap(),
            simple_relative: Regex::new(r"(?i)\b(today|yesterday|tomorrow|recently)\b").unwrap(),
            recurrence: Regex::new(
                r"(?i)\bevery\s+(day|week|month|year|weekend|morning|evening|night|monday|tuesday|wednesday|thursday|friday|saturday|sunday)\b",
            )
            .unwrap(),
        }
    })
}

fn number_word(w: &str) -> Option<u32> {
    match w.to_lowercase().as_str() {
        "a" | "an" | "one" => Some(1),
        "two" => Some(2),
        "three" | "a few" | "few" | "several" => Some(3),
        "four" => Some(4),
        "five" => Some(5),
        "six" => Some(6),
        "seven" => Some(7),
        "eight" => Some(8),
        "nine" => Some(9),
        "ten" => Some(10),
        n => n.parse().ok(),
    }
}

/// Find temporal expressions in `text`, ordered by position.
///
/// Longer, more specific patterns win: a full date consumes its month and
/// year, so `1 May, 2022` yields one expression rather than three.
pub fn detect_temporal(text: &str) -> Vec<TemporalExpression> {
    let r = rules();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut found: Vec<(usize, TemporalExpression)> = Vec::new();
    let free =
        |taken: &[(usize, usize)], s: usize, e: usize| taken.iter().all(|&(a, b)| e <= a || s >= b);
    let mut push = |taken: &mut Vec<(usize, usize)>,
                    s: usize,
                    e: usize,
                    kind: TemporalKind,
                    normalized: String| {
        taken.push((s, e));
        found.push((
            s,
            TemporalExpression {
                raw: text[s..e].to_string(),
                kind,
                normalized,
            },
        ));
    };

    for c in r.iso_date.captures_iter(text) {
        let m = c.get(0).unwrap();
        if let Ok(d) = NaiveDate::parse_from_str(m.as_str(), "%Y-%m-%d") {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Absolute,
                d.format("%Y-%m-%d").to_string(),
            );
        }
    }
    for m in day_month_year_re().find_iter(text) {
        if !free(&taken, m.start(), m.end()) {
            continue;
        }
        if let Some(d) = parse_date(m.as_str()) {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Absolute,
                d.format("%Y-%m-%d").to_string(),
            );
        }
    }
    for c in r.iso_month.captures_iter(text) {
        let m = c.get(0).unwrap();
        let month: u32 = c[2].parse().unwrap_or(0);
        if free(&taken, m.start(), m.end()) && (1..=12).contains(&month) {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Absolute,
                format!("{}-{:02}", &c[1], month),
            );
        }
    }
    for c in r.month_year.captures_iter(text) {
        let m = c.get(0).unwrap();
        if !free(&taken, m.start(), m.end()) {
            continue;
        }
        if let Some(month) = month_number(&c[1]) {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Absolute,
                format!("{}-{:02}", &c[2], month),
            );
        }
    }
    for m in r.year.find_iter(text) {
        if free(&taken, m.start(), m.end()) {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Absolute,
                m.as_str().to_string(),
            );
        }
    }
    for c in r.recurrence.captures_iter(text) {
        let m = c.get(0).unwrap();
        if free(&taken, m.start(), m.end()) {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Recurrence,
                format!("every:{}", c[1].to_lowercase()),
            );
        }
    }
    for c in r.relative_unit.captures_iter(text) {
        let m = c.get(0).unwrap();
        if free(&taken, m.start(), m.end()) {
            let norm = format!("{}_{}", c[1].to_lowercase(), c[2].to_lowercase());
            push(&mut taken, m.start(), m.end(), TemporalKind::Relative, norm);
        }
    }
    for c in r.ago.captures_iter(text) {
        let m = c.get(0).unwrap();
        if !free(&taken, m.start(), m.end()) {
            continue;
        }
        if let Some(n) = number_word(&c[1]) {
            let unit = c[2].to_lowercase();
            let unit = unit.trim_end_matches('s');
            let norm = if n == 1 {
                format!("1_{unit}_ago")
            } else {
                format!("{n}_{unit}s_ago")
            };
            push(&mut taken, m.start(), m.end(), TemporalKind::Relative, norm);
        }
    }
    for m in r.simple_relative.find_iter(text) {
        if free(&taken, m.start(), m.end()) {
            push(
                &mut taken,
                m.start(),
                m.end(),
                TemporalKind::Relative,
                m.as_str().to_lowercase(),
            );
        }
    }
    found.sort_by_key(|(pos, _)| *pos);
    found.into_iter().map(|(_, e)| e).collect()
}

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    fn day(d: NaiveDate) -> Self {
        DateRange { start: d, end: d }
    }

    fn month(year: i32, month: u32) -> Option<Self> {
        let start = NaiveDate::from_ymd_opt(year, month, 1)?;
        let next = if month == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)?
        } else {
            NaiveDate::from_ymd_opt(year, month + 1, 1)?
        };
        Some(DateRange {
            start,
            end: next - Duration::days(1),
        })
    }

    fn year(year: i32) -> Option<Self> {
        Some(DateRange {
            start: NaiveDate::from_ymd_opt(year, 1, 1)?,
            end: NaiveDate::from_ymd_opt(year, 12, 31)?,
        })
    }

    fn iso_week(d: NaiveDate) -> Self {
        let start = d - Duration::days(i64::from(d.weekday().num_days_from_monday()));
        DateRange {
            start,
            end: start + Duration::days(6),
        }
    }

    pub fn intersects(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Interval denoted by a normalized absolute value (`YYYY`, `YYYY-MM`, `YYYY-MM-DD`).
pub fn absolute_range(normalized: &str) -> Option<DateRange> {
    let parts: Vec<&str> = normalized.split('-').collect();
    match parts.as_slice() {
        [y] => DateRange::year(y.parse().ok()?),
        [y, m] => DateRange::month(y.parse().ok()?, m.parse().ok()?),
        [_, _, _] => NaiveDate::parse_from_str(normalized, "%Y-%m-%d")
            .ok()
            .map(DateRange::day),
        _ => None,
    }
}

fn shift_months(d: NaiveDate, months: i32) -> Option<NaiveDate> {
    let total = d.year() * 12 + d.month0() as i32 + months;
    NaiveDate::from_ymd_opt(total.div_euclid(12), total.rem_euclid(12) as u32 + 1, 1)
}

fn season(year: i32, name: &str) -> Option<DateRange> {
    // Northern-hemisphere meteorological seasons; winter starts in December.
    let (sy, sm, ey, em) = match name {
        "spring" => (year, 3, year, 5),
        "summer" => (year, 6, year, 8),
        "fall" => (year, 9, year, 11),
        "winter" => (year, 12, year + 1, 2),
        _ => return None,
    };
    Some(DateRange {
        start: DateRange::month(sy, sm)?.start,
        end: DateRange::month(ey, em)?.end,
    })
}

/// Resolve a normalized relative expression against an anchor date.
///
/// Returns `None` for expressions with no calendar extent (`recently`).
pub fn resolve_relative(normalized: &str, anchor: NaiveDate) -> Option<DateRange> {
    match normalized {
        "today" => return Some(DateRange::day(anchor)),
        "yesterday" => return Some(DateRange::day(anchor - Duration::days(1))),
        "tomorrow" => return Some(DateRange::day(anchor + Duration::days(1))),
        "recently" => return None,
        _ => {}
    }
    if let Some(rest) = normalized.strip_suffix("_ago") {
        let (n, unit) = rest.split_once('_')?;
        let n: i64 = n.parse().ok()?;
        return match unit.trim_end_matches('s') {
            "day" => Some(DateRange::day(anchor - Duration::days(n))),
            "week" => Some(DateRange::iso_week(anchor - Duration::weeks(n))),
            "month" => {
                let d = shift_months(anchor, -(n as i32))?;
                DateRange::month(d.year(), d.month())
            }
            "year" => DateRange::year(anchor.year() - n as i32),
            _ => None,
        };
    }
    let (which, unit) = normalized.split_once('_')?;
    let offset: i32 = match which {
        "last" => -1,
        "this" => 0,
        "next" => 1,
        _ => return None,
    };
    match unit {
        "week" => Some(DateRange::iso_week(
            anchor + Duration::weeks(i64::from(offset)),
        )),
        "weekend" => {
            let week = DateRange::iso_week(anchor + Duration::weeks(i64::from(offset)));
            Some(DateRange {
                start: week.start + Duration::days(5),
                end: week.end,
            })
        }
        "month" => {
            let d = shift_months(anchor, offset)?;
            DateRange::month(d.year(), d.month())
        }
        "year" => DateRange::year(anchor.year() + offset),
        s => {
            // January and February still belong to the winter that began in December.
            let base = if s == "winter" && anchor.month() <= 2 {
                anchor.year() - 1
            } else {
                anchor.year()
            };
            season(base + offset, s)
        }
    }
}

pub fn weekday_name(dt: &NaiveDateTime) -> &'static str {
    match dt.weekday() {
        chrono::Weekday::Mon => "Monday",
        chrono::Weekday::Tue => "Tuesday",
        chrono::Weekday::Wed => "Wednesday",
        chrono::Weekday::Thu => "Thursday",
        chrono::Weekday::Fri => "Friday",
        chrono::Weekday::Sat => "Saturday",
        chrono::Weekday::Sun => "Sunday",
    }
}

/// Sort key that orders by parsed time, then seq_id. Unparseable stamps sort first.
pub(crate) fn chrono_key(timestamp: &str, seq_id: u64) -> (Option<NaiveDateTime>, u64) {
    (parse_timestamp(timestamp), seq_id)
}
