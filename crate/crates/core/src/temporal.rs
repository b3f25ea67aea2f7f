//! Calendar dates, half-open day intervals, constraint resolution and
//! adaptive-granularity anchor sampling.
//!
//! Every temporal quantity in the crate is a [`TimeInterval`] at day
//! resolution with an inclusive start and an exclusive end. Coarser mentions
//! ("2015", "March 2020") normalize to the full interval covering them, so a
//! single overlap predicate serves all granularities.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Anchor cap applied when a caller does not override it.
pub const DEFAULT_MAX_ANCHORS: usize = 128;

/// Union spans longer than this many days sample anchors per year.
pub const YEAR_SPAN_THRESHOLD_DAYS: i64 = 1096;
/// Union spans longer than this many days (and not above the year
/// threshold) sample anchors per month; shorter spans sample per day.
pub const MONTH_SPAN_THRESHOLD_DAYS: i64 = 60;

pub const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemporalError {
    #[error("invalid calendar date {year:04}-{month:02}-{day:02}")]
    InvalidDate { year: i32, month: u32, day: u32 },
    #[error("cannot parse date {0:?}: expected YYYY-MM-DD")]
    Parse(String),
    #[error("invalid interval [{start}, {end}): start must precede end")]
    InvalidInterval { start: Date, end: Date },
    #[error("every temporal constraint falls outside the corpus timeline {bounds}")]
    AllConstraintsEmpty { bounds: TimeInterval },
    #[error("empty constraint set")]
    EmptyConstraintSet,
    #[error("date arithmetic out of range")]
    OutOfRange,
}

/// A Gregorian calendar day.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(NaiveDate);

/// Day number of 1970-01-01 counted from 0001-01-01 (CE day 1).
const UNIX_EPOCH_CE_DAYS: i32 = 719_163;

/// Dates are restricted to four-digit years so that the `YYYY-MM-DD` form
/// always round-trips.
const YEARS: std::ops::RangeInclusive<i32> = 1..=9999;

fn in_range(d: NaiveDate) -> Option<Date> {
    YEARS.contains(&d.year()).then_some(Date(d))
}

impl Date {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self, TemporalError> {
        NaiveDate::from_ymd_opt(year, month, day)
            .and_then(in_range)
            .ok_or(TemporalError::InvalidDate { year, month, day })
    }

    /// Infallible constructor for literals known to be valid.
    ///
    /// Panics on an invalid date.
    pub fn ymd(year: i32, month: u32, day: u32) -> Self {
        Self::new(year, month, day).expect("invalid literal date")
    }

    pub fn year(&self) -> i32 {
        self.0.year()
    }

    pub fn month(&self) -> u32 {
        self.0.month()
    }

    pub fn day(&self) -> u32 {
        self.0.day()
    }

    /// Signed day count since 1970-01-01.
    pub fn to_days(&self) -> i32 {
        self.0.num_days_from_ce() - UNIX_EPOCH_CE_DAYS
    }

    pub fn from_days(days: i32) -> Result<Self, TemporalError> {
        let ce = days
            .checked_add(UNIX_EPOCH_CE_DAYS)
            .ok_or(TemporalError::OutOfRange)?;
        NaiveDate::from_num_days_from_ce_opt(ce)
            .and_then(in_range)
            .ok_or(TemporalError::OutOfRange)
    }

    pub fn add_days(&self, days: i64) -> Result<Self, TemporalError> {
        self.0
            .checked_add_signed(Duration::days(days))
            .and_then(in_range)
            .ok_or(TemporalError::OutOfRange)
    }

    /// 0 = Monday … 6 = Sunday.
    pub fn weekday_index(&self) -> u32 {
        self.0.weekday().num_days_from_monday()
    }

    /// First day of the calendar period containing this date.
    pub fn period_start(&self, g: Granularity) -> Date {
        match g {
            Granularity::Year => Date::ymd(self.year(), 1, 1),
            Granularity::Month => Date::ymd(self.year(), self.month(), 1),
            Granularity::Day => *self,
        }
    }

    /// First day of the calendar period following the one containing this
    /// date.
    pub fn next_period_start(&self, g: Granularity) -> Result<Date, TemporalError> {
        match g {
            Granularity::Year => Date::new(self.year() + 1, 1, 1),
            Granularity::Month => {
                if self.month() == 12 {
                    Date::new(self.year() + 1, 1, 1)
                } else {
                    Date::new(self.year(), self.month() + 1, 1)
                }
            }
            Granularity::Day => self.add_days(1),
        }
    }

    /// The calendar period (year, month or day) containing this date.
    pub fn period(&self, g: Granularity) -> Result<TimeInterval, TemporalError> {
        TimeInterval::new(self.period_start(g), self.next_period_start(g)?)
    }

    pub fn month_name(&self) -> &'static str {
        MONTH_NAMES[self.month() as usize - 1]
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year(), self.month(), self.day())
    }
}

impl fmt::Debug for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Date {
    type Err = TemporalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TemporalError::Parse(s.to_string());
        let s = s.trim();
        let mut parts = s.splitn(3, '-');
        let (y, m, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(y), Some(m), Some(d)) if y.len() == 4 && m.len() == 2 && d.len() == 2 => {
                (y, m, d)
            }
            _ => return Err(bad()),
        };
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        let day = d.parse().map_err(|_| bad())?;
        Date::new(year, month, day)
    }
}

impl Serialize for Date {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open interval `[start, end)` of calendar days. Serialized as
/// `{"start": "YYYY-MM-DD", "end": "YYYY-MM-DD"}` with `end` exclusive.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct TimeInterval {
    start: Date,
    end: Date,
}

#[derive(Deserialize)]
struct RawInterval {
    start: Date,
    end: Date,
}

impl TryFrom<RawInterval> for TimeInterval {
    type Error = TemporalError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        TimeInterval::new(raw.start, raw.end)
    }
}

impl TimeInterval {
    pub fn new(start: Date, end: Date) -> Result<Self, TemporalError> {
        if start < end {
            Ok(TimeInterval { start, end })
        } else {
            Err(TemporalError::InvalidInterval { start, end })
        }
    }

    pub fn from_days(start: i32, end: i32) -> Result<Self, TemporalError> {
        TimeInterval::new(Date::from_days(start)?, Date::from_days(end)?)
    }

    /// The whole calendar year.
    pub fn year(year: i32) -> Result<Self, TemporalError> {
        Date::new(year, 1, 1)?.period(Granularity::Year)
    }

    /// The whole calendar month.
    pub fn month(year: i32, month: u32) -> Result<Self, TemporalError> {
        Date::new(year, month, 1)?.period(Granularity::Month)
    }

    /// A single day.
    pub fn day(date: Date) -> Result<Self, TemporalError> {
        date.period(Granularity::Day)
    }

    pub fn start(&self) -> Date {
        self.start
    }

    pub fn end(&self) -> Date {
        self.end
    }

    pub fn start_days(&self) -> i32 {
        self.start.to_days()
    }

    pub fn end_days(&self) -> i32 {
        self.end.to_days()
    }

    /// Number of days covered.
    pub fn len_days(&self) -> i64 {
        i64::from(self.end_days()) - i64::from(self.start_days())
    }

    pub fn contains(&self, d: Date) -> bool {
        self.start <= d && d < self.end
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        overlaps(self, other)
    }

    pub fn intersection(&self, other: &TimeInterval) -> Option<TimeInterval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        TimeInterval::new(start, end).ok()
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

impl fmt::Debug for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A temporal condition extracted from a question, before it is clamped to
/// a corpus timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalConstraint {
    Bounded { interval: TimeInterval },
    /// Strictly before the date.
    Before { date: Date },
    /// On or after the date.
    After { date: Date },
    Unconstrained,
}

/// Calendar sampling resolution, ordered coarse to fine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Year,
    Month,
    Day,
}

impl Granularity {
    /// One step coarser, saturating at `Year`.
    pub fn coarser(self) -> Granularity {
        match self {
            Granularity::Year | Granularity::Month => Granularity::Year,
            Granularity::Day => Granularity::Month,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Year => "year",
            Granularity::Month => "month",
            Granularity::Day => "day",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "year" => Ok(Granularity::Year),
            "month" => Ok(Granularity::Month),
            "day" => Ok(Granularity::Day),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

/// Half-open overlap: true iff the intervals share at least one day.
pub fn overlaps(a: &TimeInterval, b: &TimeInterval) -> bool {
    a.start < b.end && b.start < a.end
}

/// Sort and merge overlapping or adjacent intervals into maximal runs.
pub fn merge_intervals(mut intervals: Vec<TimeInterval>) -> Vec<TimeInterval> {
    intervals.sort();
    let mut merged: Vec<TimeInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.start <= last.end => {
                if iv.end > last.end {
                    last.end = iv.end;
                }
            }
            _ => merged.push(iv),
        }
    }
    merged
}

/// Clamp raw constraints to the corpus timeline.
///
/// Output intervals are pairwise disjoint, sorted ascending and contained in
/// `corpus_bounds`. Constraints that clip to nothing are dropped; if every
/// constraint does, the query lies wholly outside the corpus.
pub fn resolve_constraints(
    constraints: &[TemporalConstraint],
    corpus_bounds: TimeInterval,
) -> Result<Vec<TimeInterval>, TemporalError> {
    if constraints.is_empty() {
        return Ok(vec![corpus_bounds]);
    }
    let mut clipped = Vec::with_capacity(constraints.len());
    for c in constraints {
        let candidate = match *c {
            TemporalConstraint::Bounded { interval } => interval.intersection(&corpus_bounds),
            TemporalConstraint::Before { date } => {
                TimeInterval::new(corpus_bounds.start, date.min(corpus_bounds.end)).ok()
            }
            TemporalConstraint::After { date } => {
                TimeInterval::new(date.max(corpus_bounds.start), corpus_bounds.end).ok()
            }
            TemporalConstraint::Unconstrained => Some(corpus_bounds),
        };
        clipped.extend(candidate);
    }
    if clipped.is_empty() {
        return Err(TemporalError::AllConstraintsEmpty {
            bounds: corpus_bounds,
        });
    }
    Ok(merge_intervals(clipped))
}

/// Total number of days in the union of the intervals.
pub fn union_span_days(intervals: &[TimeInterval]) -> i64 {
    merge_intervals(intervals.to_vec())
        .iter()
        .map(TimeInterval::len_days)
        .sum()
}

/// Anchor granularity for a query range: one calendar level finer than the
/// range's dominant unit.
pub fn choose_granularity(intervals: &[TimeInterval]) -> Result<Granularity, TemporalError> {
    if intervals.is_empty() {
        return Err(TemporalError::EmptyConstraintSet);
    }
    let span = union_span_days(intervals);
    Ok(if span > YEAR_SPAN_THRESHOLD_DAYS {
        Granularity::Year
    } else if span > MONTH_SPAN_THRESHOLD_DAYS {
        Granularity::Month
    } else {
        Granularity::Day
    })
}

/// Calendar periods at `g` overlapping the union of `intervals`, each
/// clipped to the union. Sorted ascending.
pub fn calendar_buckets(intervals: &[TimeInterval], g: Granularity) -> Vec<TimeInterval> {
    let mut buckets = Vec::new();
    for iv in merge_intervals(intervals.to_vec()) {
        let mut p = iv.start.period_start(g);
        while p < iv.end {
            let Ok(next) = p.next_period_start(g) else {
                break;
            };
            let lo = p.max(iv.start);
            let hi = next.min(iv.end);
            buckets.extend(TimeInterval::new(lo, hi).ok());
            p = next;
        }
    }
    buckets
}

/// First day of every calendar period at `g` overlapping some interval,
/// thinned to at most `max_anchors` by uniform stride sampling that keeps
/// the first and last anchor.
pub fn sample_anchors(intervals: &[TimeInterval], g: Granularity, max_anchors: usize) -> Vec<Date> {
    let mut anchors: Vec<Date> = Vec::new();
    for iv in intervals {
        let mut p = iv.start.period_start(g);
        while p < iv.end {
            anchors.push(p);
            match p.next_period_start(g) {
                Ok(next) => p = next,
                Err(_) => break,
            }
        }
    }
    anchors.sort();
    anchors.dedup();
    thin_uniform(anchors, max_anchors.max(1))
}

fn thin_uniform<T: Copy>(items: Vec<T>, limit: usize) -> Vec<T> {
    let n = items.len();
    if n <= limit {
        return items;
    }
    if limit == 1 {
        return vec![items[0]];
    }
    let (span, steps) = (n - 1, limit - 1);
    (0..limit)
        .map(|i| items[(i * span + steps / 2) / steps])
        .collect()
}

/// Natural-language time phrase prepended to the core query.
pub fn render_anchor(d: Date, g: Granularity, q_core: &str) -> String {
    match g {
        Granularity::Year => format!("In {}, {}", d.year(), q_core),
        Granularity::Month => format!("In {} {}, {}", d.month_name(), d.year(), q_core),
        Granularity::Day => format!("On {} {}, {}, {}", d.month_name(), d.day(), d.year(), q_core),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: (i32, u32, u32), b: (i32, u32, u32)) -> TimeInterval {
        TimeInterval::new(Date::ymd(a.0, a.1, a.2), Date::ymd(b.0, b.1, b.2)).unwrap()
    }

    /// Independent oracle: materialize the day sets.
    fn day_set(i: &TimeInterval) -> std::collections::BTreeSet<i32> {
        (i.start_days()..i.end_days()).collect()
    }

    #[test]
    fn leap_years_are_honored() {
        assert!(Date::new(2012, 2, 29).is_ok());
        assert!(Date::new(2000, 2, 29).is_ok());
        assert!(Date::new(1900, 2, 29).is_err());
        assert!(Date::new(2015, 13, 1).is_err());
        assert_eq!(Date::ymd(1970, 1, 1).to_days(), 0);
    }

    #[test]
    fn zero_length_interval_rejected() {
        let d = Date::ymd(2015, 1, 1);
        assert!(TimeInterval::new(d, d).is_err());
    }

    #[test]
    fn overlap_examples() {
        let year = iv((2015, 1, 1), (2016, 1, 1));
        assert!(overlaps(&year, &iv((2015, 6, 1), (2015, 7, 1))));
        assert!(!overlaps(&year, &iv((2016, 1, 1), (2017, 1, 1))));
        let a = iv((2012, 3, 1), (2012, 9, 1));
        let b = iv((2012, 8, 31), (2013, 1, 1));
        assert!(!day_set(&a).is_disjoint(&day_set(&b)));
        assert!(overlaps(&a, &b));
    }

    #[test]
    fn overlap_matches_day_sets_exhaustively_in_small_window() {
        // Every interval inside a 400-day window with a coarse step on one
        // end keeps the pair count tractable while hitting all adjacencies.
        let base = Date::ymd(2011, 12, 1).to_days();
        let mut all = Vec::new();
        for s in (0..400).step_by(7) {
            for len in [1, 2, 3, 30, 31, 95, 200] {
                if s + len <= 400 {
                    all.push(TimeInterval::from_days(base + s, base + s + len).unwrap());
                }
            }
        }
        for a in &all {
            let da = day_set(a);
            for b in &all {
                let brute = !da.is_disjoint(&day_set(b));
                assert_eq!(overlaps(a, b), brute, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn resolve_examples() {
        let bounds = iv((2012, 1, 1), (2023, 1, 1));
        let before = TemporalConstraint::Before {
            date: Date::ymd(2015, 1, 1),
        };
        assert_eq!(
            resolve_constraints(&[before], bounds).unwrap(),
            vec![iv((2012, 1, 1), (2015, 1, 1))]
        );
        assert_eq!(
            resolve_constraints(&[TemporalConstraint::Unconstrained], bounds).unwrap(),
            vec![bounds]
        );
        assert_eq!(resolve_constraints(&[], bounds).unwrap(), vec![bounds]);

        // Union of day sets re-segmented into maximal runs.
        let a = iv((2014, 1, 1), (2016, 1, 1));
        let b = iv((2015, 6, 1), (2017, 1, 1));
        let mut days: Vec<i32> = day_set(&a).union(&day_set(&b)).copied().collect();
        days.sort();
        let contiguous = days.windows(2).all(|w| w[1] == w[0] + 1);
        assert!(contiguous);
        let expected = TimeInterval::from_days(days[0], days[days.len() - 1] + 1).unwrap();
        assert_eq!(expected, iv((2014, 1, 1), (2017, 1, 1)));
        let got = resolve_constraints(
            &[
                TemporalConstraint::Bounded { interval: a },
                TemporalConstraint::Bounded { interval: b },
            ],
            bounds,
        )
        .unwrap();
        assert_eq!(got, vec![expected]);
    }

    #[test]
    fn resolve_drops_empty_and_errors_when_all_empty() {
        let bounds = iv((2012, 1, 1), (2023, 1, 1));
        let outside = TemporalConstraint::Bounded {
            interval: iv((1990, 1, 1), (1991, 1, 1)),
        };
        let inside = TemporalConstraint::After {
            date: Date::ymd(2020, 1, 1),
        };
        assert_eq!(
            resolve_constraints(&[outside, inside], bounds).unwrap(),
            vec![iv((2020, 1, 1), (2023, 1, 1))]
        );
        let too_late = TemporalConstraint::After {
            date: Date::ymd(2030, 1, 1),
        };
        assert!(matches!(
            resolve_constraints(&[outside, too_late], bounds),
            Err(TemporalError::AllConstraintsEmpty { .. })
        ));
        let too_early = TemporalConstraint::Before {
            date: Date::ymd(2012, 1, 1),
        };
        assert!(resolve_constraints(&[too_early], bounds).is_err());
    }

    #[test]
    fn granularity_examples() {
        let decade = iv((2015, 1, 1), (2025, 1, 1));
        assert_eq!(decade.len_days(), 3653);
        assert_eq!(choose_granularity(&[decade]).unwrap(), Granularity::Year);
        let months = iv((2015, 5, 1), (2016, 2, 1));
        assert_eq!(months.len_days(), 276);
        assert_eq!(choose_granularity(&[months]).unwrap(), Granularity::Month);
        let days = iv((2020, 3, 1), (2020, 3, 15));
        assert_eq!(days.len_days(), 14);
        assert_eq!(choose_granularity(&[days]).unwrap(), Granularity::Day);
        assert_eq!(
            choose_granularity(&[]),
            Err(TemporalError::EmptyConstraintSet)
        );
    }

    #[test]
    fn granularity_threshold_edges() {
        let start = Date::ymd(2010, 1, 1).to_days();
        let g = |len: i32| choose_granularity(&[TimeInterval::from_days(start, start + len).unwrap()]).unwrap();
        assert_eq!(g(60), Granularity::Day);
        assert_eq!(g(61), Granularity::Month);
        assert_eq!(g(1096), Granularity::Month);
        assert_eq!(g(1097), Granularity::Year);
    }

    #[test]
    fn anchor_examples() {
        let years = iv((2015, 1, 1), (2018, 1, 1));
        assert_eq!(
            sample_anchors(&[years], Granularity::Year, DEFAULT_MAX_ANCHORS),
            vec![Date::ymd(2015, 1, 1), Date::ymd(2016, 1, 1), Date::ymd(2017, 1, 1)]
        );

        // Brute force: walk every day, collect the distinct month starts.
        let span = iv((2015, 11, 15), (2016, 2, 10));
        let mut months: Vec<Date> = (span.start_days()..span.end_days())
            .map(|d| {
                let d = Date::from_days(d).unwrap();
                Date::ymd(d.year(), d.month(), 1)
            })
            .collect();
        months.dedup();
        assert_eq!(months.len(), 4);
        assert_eq!(
            sample_anchors(&[span], Granularity::Month, DEFAULT_MAX_ANCHORS),
            months
        );
    }

    #[test]
    fn anchor_thinning_keeps_endpoints() {
        let span = iv((2012, 1, 1), (2023, 1, 1));
        let anchors = sample_anchors(&[span], Granularity::Month, 12);
        // Frozen from a stride oracle over the 132-month list:
        // index_i = round(i * 131 / 11).
        let expected: Vec<Date> = [
            (2012, 1),
            (2013, 1),
            (2014, 1),
            (2015, 1),
            (2016, 1),
            (2017, 1),
            (2017, 12),
            (2018, 12),
            (2019, 12),
            (2020, 12),
            (2021, 12),
            (2022, 12),
        ]
        .iter()
        .map(|&(y, m)| Date::ymd(y, m, 1))
        .collect();
        assert_eq!(anchors, expected);
    }

    #[test]
    fn render_templates() {
        assert_eq!(
            render_anchor(Date::ymd(2011, 1, 1), Granularity::Month, "Apple stock price trend"),
            "In January 2011, Apple stock price trend"
        );
        assert_eq!(render_anchor(Date::ymd(2018, 1, 1), Granularity::Year, "X"), "In 2018, X");
        assert_eq!(
            render_anchor(Date::ymd(2020, 3, 15), Granularity::Day, "earnings report"),
            "On March 15, 2020, earnings report"
        );
    }

    #[test]
    fn serde_shapes() {
        let i = iv((2015, 1, 1), (2016, 1, 1));
        let json = serde_json::to_string(&i).unwrap();
        assert_eq!(json, r#"{"start":"2015-01-01","end":"2016-01-01"}"#);
        assert_eq!(serde_json::from_str::<TimeInterval>(&json).unwrap(), i);
        assert!(serde_json::from_str::<TimeInterval>(r#"{"start":"2016-01-01","end":"2015-01-01"}"#).is_err());
        assert!("2015-02-30".parse::<Date>().is_err());
        let c = TemporalConstraint::Before {
            date: Date::ymd(2020, 1, 1),
        };
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"kind":"before","date":"2020-01-01"}"#
        );
    }

    fn arb_interval() -> impl Strategy<Value = TimeInterval> {
        (-3000i32..25_000, 1i32..2_000)
            .prop_map(|(s, len)| TimeInterval::from_days(s, s + len).unwrap())
    }

    fn arb_constraint() -> impl Strategy<Value = TemporalConstraint> {
        prop_oneof![
            arb_interval().prop_map(|interval| TemporalConstraint::Bounded { interval }),
            (-3000i32..27_000).prop_map(|d| TemporalConstraint::Before {
                date: Date::from_days(d).unwrap()
            }),
            (-3000i32..27_000).prop_map(|d| TemporalConstraint::After {
                date: Date::from_days(d).unwrap()
            }),
            Just(TemporalConstraint::Unconstrained),
        ]
    }

    #[test]
    fn years_outside_four_digits_are_rejected() {
        assert!(Date::from_days(-719_163).is_err());
        assert!(Date::from_days(2_932_897).is_err());
        assert!(Date::new(10_000, 1, 1).is_err());
        assert!(Date::ymd(9999, 12, 31).add_days(1).is_err());
    }

    proptest! {
        #[test]
        fn day_count_round_trip(days in -719_162i32..2_932_897) {
            let d = Date::from_days(days).unwrap();
            prop_assert_eq!(d.to_days(), days);
            prop_assert_eq!(d.to_string().parse::<Date>().unwrap(), d);
        }

        #[test]
        fn overlap_is_symmetric(a in arb_interval(), b in arb_interval()) {
            prop_assert_eq!(overlaps(&a, &b), overlaps(&b, &a));
        }

        #[test]
        fn intersection_is_valid_when_overlapping(a in arb_interval(), b in arb_interval()) {
            match a.intersection(&b) {
                Some(i) => {
                    prop_assert!(overlaps(&a, &b));
                    prop_assert!(i.start() < i.end());
                }
                None => prop_assert!(!overlaps(&a, &b)),
            }
        }

        #[test]
        fn resolved_intervals_are_disjoint_sorted_and_bounded(
            constraints in proptest::collection::vec(arb_constraint(), 0..6),
        ) {
            let bounds = TimeInterval::from_days(15_000, 19_000).unwrap();
            if let Ok(out) = resolve_constraints(&constraints, bounds) {
                prop_assert!(!out.is_empty());
                for w in out.windows(2) {
                    prop_assert!(w[0].end() < w[1].start());
                }
                for i in &out {
                    prop_assert!(bounds.start() <= i.start() && i.end() <= bounds.end());
                }
            }
        }

        #[test]
        fn unlimited_anchors_hit_every_overlapping_period(
            a in arb_interval(), b in arb_interval(), g in prop_oneof![Just(Granularity::Year), Just(Granularity::Month)],
        ) {
            let ivs = merge_intervals(vec![a, b]);
            let anchors = sample_anchors(&ivs, g, usize::MAX);
            // brute force over days: collect each distinct period start
            let mut expected: Vec<Date> = ivs
                .iter()
                .flat_map(|i| i.start_days()..i.end_days())
                .map(|d| Date::from_days(d).unwrap().period_start(g))
                .collect();
            expected.sort();
            expected.dedup();
            prop_assert_eq!(&anchors, &expected);
            for d in anchors {
                let p = d.period(g).unwrap();
                prop_assert!(ivs.iter().any(|i| overlaps(i, &p)));
            }
        }

        #[test]
        fn thinning_is_bounded_and_keeps_ends(n in 1usize..400, limit in 2usize..150) {
            let items: Vec<usize> = (0..n).collect();
            let out = thin_uniform(items, limit);
            prop_assert_eq!(out.len(), n.min(limit));
            prop_assert_eq!(out[0], 0);
            prop_assert_eq!(*out.last().unwrap(), n - 1);
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn granularity_is_monotone(s in 0i32..20_000, len in 1i32..5_000, extra in 0i32..5_000) {
            let small = TimeInterval::from_days(s, s + len).unwrap();
            let big = TimeInterval::from_days(s, s + len + extra).unwrap();
            prop_assert!(choose_granularity(&[big]).unwrap() <= choose_granularity(&[small]).unwrap());
        }
    }
}
