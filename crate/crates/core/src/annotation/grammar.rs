//! Rule-based date-expression grammar.
//!
//! [`scan`] finds non-overlapping date mentions in text. Absolute mentions
//! (full dates, month-year, quarter-year, year) resolve on their own;
//! relative mentions (bare month names, weekdays, "last quarter") need a
//! reference date and only appear when [`ScanMode::WithRelative`] is used.
//!
//! Recognized forms:
//!
//! | form | example | interval |
//! |---|---|---|
//! | ISO date | `2014-03-05` | that day |
//! | month day, year | `March 5, 2014`, `Mar. 5th 2014` | that day |
//! | day month year | `5 March 2014` | that day |
//! | month year | `March 2014`, `March of 2014` | that month |
//! | quarter | `Q3 2015`, `third quarter of 2015` | that quarter |
//! | year | `2015` (1900–2099) | that year |
//! | relative period | `last year`, `this month`, `next quarter` | relative to reference |
//! | month day | `March 5` | that day in the reference year |
//! | bare month | `June` (capitalized) | that month in the reference year |
//! | weekday | `Monday` (capitalized) | latest such day on or before the reference |

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use crate::temporal::{Date, Granularity, TimeInterval};

const MONTH: &str = r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\.?";
const YEAR: &str = r"(?:19|20)\d{2}";
const ORD: &str = r"(?:st|nd|rd|th)?";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expr {
    Day(Date),
    Month { year: i32, month: u32 },
    Quarter { year: i32, quarter: u32 },
    Year(i32),
    /// Offset in whole periods from the reference date's period.
    RelativePeriod { g: RelUnit, offset: i32 },
    MonthDay { month: u32, day: u32 },
    BareMonth(u32),
    /// 0 = Monday.
    Weekday(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelUnit {
    Year,
    Quarter,
    Month,
}

impl Expr {
    pub fn is_absolute(&self) -> bool {
        matches!(self, Expr::Day(_) | Expr::Month { .. } | Expr::Quarter { .. } | Expr::Year(_))
    }

    /// Coarseness rank: 0 = day, 1 = month, 2 = quarter, 3 = year.
    pub fn precision(&self) -> u8 {
        match self {
            Expr::Day(_) | Expr::MonthDay { .. } | Expr::Weekday(_) => 0,
            Expr::Month { .. } | Expr::BareMonth(_) => 1,
            Expr::Quarter { .. } => 2,
            Expr::RelativePeriod { g, .. } => match g {
                RelUnit::Month => 1,
                RelUnit::Quarter => 2,
                RelUnit::Year => 3,
            },
            Expr::Year(_) => 3,
        }
    }

    /// The covering interval; relative forms need `reference`.
    pub fn resolve(&self, reference: Option<Date>) -> Option<TimeInterval> {
        match *self {
            Expr::Day(d) => TimeInterval::day(d).ok(),
            Expr::Month { year, month } => TimeInterval::month(year, month).ok(),
            Expr::Quarter { year, quarter } => quarter_interval(year, quarter),
            Expr::Year(y) => TimeInterval::year(y).ok(),
            Expr::RelativePeriod { g, offset } => {
                let r = reference?;
                match g {
                    RelUnit::Year => TimeInterval::year(r.year() + offset).ok(),
                    RelUnit::Month => {
                        let idx = r.year() * 12 + r.month() as i32 - 1 + offset;
                        TimeInterval::month(idx.div_euclid(12), idx.rem_euclid(12) as u32 + 1).ok()
                    }
                    RelUnit::Quarter => {
                        let idx = r.year() * 4 + (r.month() as i32 - 1) / 3 + offset;
                        quarter_interval(idx.div_euclid(4), idx.rem_euclid(4) as u32 + 1)
                    }
                }
            }
            Expr::MonthDay { month, day } => {
                let r = reference?;
                TimeInterval::day(Date::new(r.year(), month, day).ok()?).ok()
            }
            Expr::BareMonth(m) => TimeInterval::month(reference?.year(), m).ok(),
            Expr::Weekday(w) => {
                let r = reference?;
                let back = (r.weekday_index() + 7 - w) % 7;
                TimeInterval::day(r.add_days(-i64::from(back)).ok()?).ok()
            }
        }
    }
}

fn quarter_interval(year: i32, quarter: u32) -> Option<TimeInterval> {
    if !(1..=4).contains(&quarter) {
        return None;
    }
    let start = Date::new(year, (quarter - 1) * 3 + 1, 1).ok()?;
    let end = Date::new(year, (quarter - 1) * 3 + 3, 1).ok()?.next_period_start(Granularity::Month).ok()?;
    TimeInterval::new(start, end).ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub span: Range<usize>,
    pub expr: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    AbsoluteOnly,
    WithRelative,
}

struct Pattern {
    re: Regex,
    relative: bool,
    build: fn(&regex::Captures<'_>) -> Option<Expr>,
}

fn month_number(s: &str) -> Option<u32> {
    let s = s.trim_end_matches('.').to_ascii_lowercase();
    let key = s.get(..3)?;
    let m = match key {
        "jan" => 1,
        "feb" => 2,
        "mar" => 3,
        "apr" => 4,
        "may" => 5,
        "jun" => 6,
        "jul" => 7,
        "aug" => 8,
        "sep" => 9,
        "oct" => 10,
        "nov" => 11,
        "dec" => 12,
        _ => return None,
    };
    Some(m)
}

fn num<T: std::str::FromStr>(c: &regex::Captures<'_>, name: &str) -> Option<T> {
    c.name(name)?.as_str().parse().ok()
}

fn capitalized(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}

fn ordinal_quarter(s: &str) -> Option<u32> {
    match s.to_ascii_lowercase().as_str() {
        "first" | "1st" => Some(1),
        "second" | "2nd" => Some(2),
        "third" | "3rd" => Some(3),
        "fourth" | "4th" => Some(4),
        _ => None,
    }
}

static PATTERNS: LazyLock<Vec<Pattern>> = LazyLock::new(|| {
    let p = |src: String, relative: bool, build: fn(&regex::Captures<'_>) -> Option<Expr>| Pattern {
        re: Regex::new(&src).expect("date grammar regex"),
        relative,
        build,
    };
    vec![
        p(
            r"\b(?P<y>\d{4})-(?P<m>\d{2})-(?P<d>\d{2})\b".into(),
            false,
            |c| Date::new(num(c, "y")?, num(c, "m")?, num(c, "d")?).ok().map(Expr::Day),
        ),
        p(
            format!(r"(?i)\b(?P<mon>{MONTH})\s+(?P<d>\d{{1,2}}){ORD},?\s+(?P<y>{YEAR})\b"),
            false,
            |c| {
                Date::new(num(c, "y")?, month_number(c.name("mon")?.as_str())?, num(c, "d")?)
                    .ok()
                    .map(Expr::Day)
            },
        ),
        p(
            format!(r"(?i)\b(?P<d>\d{{1,2}}){ORD}\s+(?P<mon>{MONTH}),?\s+(?P<y>{YEAR})\b"),
            false,
            |c| {
                Date::new(num(c, "y")?, month_number(c.name("mon")?.as_str())?, num(c, "d")?)
                    .ok()
                    .map(Expr::Day)
            },
        ),
        p(
            format!(r"(?i)\b(?P<mon>{MONTH}),?\s+(?:of\s+)?(?P<y>{YEAR})\b"),
            false,
            |c| {
                Some(Expr::Month {
                    year: num(c, "y")?,
                    month: month_number(c.name("mon")?.as_str())?,
                })
            },
        ),
        p(
            format!(r"(?i)\bQ(?P<q>[1-4])\s*(?:of\s+)?(?P<y>{YEAR})\b"),
            false,
            |c| Some(Expr::Quarter { year: num(c, "y")?, quarter: num(c, "q")? }),
        ),
        p(
            format!(r"(?i)\b(?:the\s+)?(?P<q>first|second|third|fourth|1st|2nd|3rd|4th)\s+quarter\s+(?:of\s+)?(?P<y>{YEAR})\b"),
            false,
            |c| {
                Some(Expr::Quarter {
                    year: num(c, "y")?,
                    quarter: ordinal_quarter(c.name("q")?.as_str())?,
                })
            },
        ),
        p(format!(r"\b(?P<y>{YEAR})\b"), false, |c| Some(Expr::Year(num(c, "y")?))),
        p(
            r"(?i)\b(?P<rel>last|this|next|previous|past|current|prior)\s+(?P<u>year|quarter|month)\b".into(),
            true,
            |c| {
                let offset = match c.name("rel")?.as_str().to_ascii_lowercase().as_str() {
                    "last" | "previous" | "past" | "prior" => -1,
                    "next" => 1,
                    _ => 0,
                };
                let g = match c.name("u")?.as_str().to_ascii_lowercase().as_str() {
                    "year" => RelUnit::Year,
                    "quarter" => RelUnit::Quarter,
                    _ => RelUnit::Month,
                };
                Some(Expr::RelativePeriod { g, offset })
            },
        ),
        p(
            format!(r"(?i)\b(?P<mon>{MONTH})\s+(?P<d>\d{{1,2}}){ORD}\b"),
            true,
            |c| {
                let mon = c.name("mon")?.as_str();
                if !capitalized(mon) {
                    return None;
                }
                let day: u32 = num(c, "d")?;
                (1..=31).contains(&day).then_some(Expr::MonthDay {
                    month: month_number(mon)?,
                    day,
                })
            },
        ),
        p(
            r"\b(?P<mon>January|February|March|April|May|June|July|August|September|October|November|December)\b".into(),
            true,
            |c| Some(Expr::BareMonth(month_number(c.name("mon")?.as_str())?)),
        ),
        p(
            r"\b(?P<w>Monday|Tuesday|Wednesday|Thursday|Friday|Saturday|Sunday)\b".into(),
            true,
            |c| {
                let w = match &c.name("w")?.as_str()[..3] {
                    "Mon" => 0,
                    "Tue" => 1,
                    "Wed" => 2,
                    "Thu" => 3,
                    "Fri" => 4,
                    "Sat" => 5,
                    _ => 6,
                };
                Some(Expr::Weekday(w))
            },
        ),
    ]
});

/// Non-overlapping mentions in text order. Overlaps resolve to the earliest
/// start, then the longest match, then pattern order.
pub fn scan(text: &str, mode: ScanMode) -> Vec<Mention> {
    let mut found: Vec<(usize, usize, usize, Expr)> = Vec::new();
    for (rank, pat) in PATTERNS.iter().enumerate() {
        if pat.relative && mode == ScanMode::AbsoluteOnly {
            continue;
        }
        for c in pat.re.captures_iter(text) {
            let m = c.get(0).expect("whole match");
            if let Some(expr) = (pat.build)(&c) {
                found.push((m.start(), m.end(), rank, expr));
            }
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<Mention> = Vec::new();
    let mut cursor = 0usize;
    for (s, e, _, expr) in found {
        if s < cursor {
            continue;
        }
        out.push(Mention { span: s..e, expr });
        cursor = e;
    }
    out
}

static RANGE_SEPARATOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(?:to|and|until|till|through|thru|[-–—])\s*$").unwrap());
static RANGE_OPENER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:from|between)\s+$").unwrap());
static DASH_ONLY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-–—]\s*$").unwrap());

/// A run of one mention, or two mentions joined into a range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    /// From the range opener (if any) through the last mention.
    pub span: Range<usize>,
    pub first: Expr,
    pub last: Option<Expr>,
}

/// Pair mentions written as ranges: "from A to B", "between A and B", and
/// "A–B" between two absolute mentions.
pub fn group_ranges(text: &str, mentions: &[Mention]) -> Vec<Group> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mentions.len() {
        let a = &mentions[i];
        if let Some(b) = mentions.get(i + 1) {
            let between = &text[a.span.end..b.span.start];
            let before = &text[..a.span.start];
            let opener = RANGE_OPENER.find(before);
            let joined = RANGE_SEPARATOR.is_match(between)
                && (opener.is_some() || (DASH_ONLY.is_match(between) && a.expr.is_absolute() && b.expr.is_absolute()));
            if joined {
                let start = opener.map_or(a.span.start, |m| m.start());
                out.push(Group {
                    span: start..b.span.end,
                    first: a.expr,
                    last: Some(b.expr),
                });
                i += 2;
                continue;
            }
        }
        out.push(Group {
            span: a.span.clone(),
            first: a.expr,
            last: None,
        });
        i += 1;
    }
    out
}

impl Group {
    /// Covering interval: the hull from the first mention's start to the
    /// last mention's end.
    pub fn resolve(&self, reference: Option<Date>) -> Option<TimeInterval> {
        let a = self.first.resolve(reference)?;
        match self.last {
            None => Some(a),
            Some(last) => {
                let b = last.resolve(reference)?;
                TimeInterval::new(a.start().min(b.start()), a.end().max(b.end())).ok()
            }
        }
    }
}

/// Every event interval mentioned in `text`, relative mentions resolved
/// against `reference`. Sorted and deduplicated.
pub fn extract_intervals(text: &str, reference: Option<Date>) -> Vec<TimeInterval> {
    let mode = if reference.is_some() {
        ScanMode::WithRelative
    } else {
        ScanMode::AbsoluteOnly
    };
    let mentions = scan(text, mode);
    let mut out: Vec<TimeInterval> = group_ranges(text, &mentions)
        .iter()
        .filter_map(|g| g.resolve(reference))
        .collect();
    out.sort();
    out.dedup();
    out
}
