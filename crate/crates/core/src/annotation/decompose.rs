//! Rule route for question decomposition.

use std::sync::LazyLock;

use regex::Regex;

use super::grammar::{group_ranges, scan, Group, ScanMode};
use super::{AnnotationError, AnnotationSource, DecomposedQuery};
use crate::temporal::TemporalConstraint;

/// Connective phrase immediately preceding a date mention.
static CONNECTIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)
        (?P<frame>\b(?:in|during|over|for|across|within|throughout)\s+the\s+(?:period|years?|months?|time\s*frame|span|era)\s+)?
        (?P<conn>\b(?:
            before|prior\s+to|earlier\s+than|after|following|later\s+than|since|until|till|through|thru|up\s+to|by
            |from|between|in|during|throughout|for|of|on|starting\s+(?:in|from)|beginning\s+in|as\s+of|as\s+at
        )\s+)?
        (?P<edge>the\s+(?:start|beginning|end|close)\s+of\s+(?:the\s+year\s+)?|the\s+year\s+)?$",
    )
    .expect("connective regex")
});

static STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "from", "by", "with", "and", "or", "is", "was", "were",
    "are", "be", "been", "what", "which", "who", "how", "when", "where", "why", "did", "does", "do", "has", "have",
    "had", "its", "it", "this", "that", "these", "those", "period", "time", "during", "before", "after", "since",
    "until", "between", "s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Start,
    End,
    Whole,
}

fn classify(group: &Group, conn: Option<&str>, edge: Edge) -> Option<TemporalConstraint> {
    let iv = group.resolve(None)?;
    let conn = conn.map(|c| c.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase());
    let pick = |default_end: bool| match edge {
        Edge::Start => iv.start(),
        Edge::End => iv.end(),
        Edge::Whole => {
            if default_end {
                iv.end()
            } else {
                iv.start()
            }
        }
    };
    Some(match conn.as_deref() {
        Some("before" | "prior to" | "earlier than") => TemporalConstraint::Before { date: pick(false) },
        Some("after" | "following" | "later than") => TemporalConstraint::After { date: pick(true) },
        Some("since" | "starting in" | "starting from" | "beginning in") => TemporalConstraint::After { date: pick(false) },
        Some("from") if group.last.is_none() => TemporalConstraint::After { date: pick(false) },
        Some("until" | "till" | "through" | "thru" | "up to" | "by" | "as of" | "as at") => {
            TemporalConstraint::Before { date: pick(true) }
        }
        _ => TemporalConstraint::Bounded { interval: iv },
    })
}

/// Apply the date-expression grammar to a question.
///
/// "in Y" bounds to the period; "before P" ends at P's start; "after P"
/// starts once P ends; "from A to B" spans A's start to B's end. Every
/// matched span, with its connective, is removed to form the core query.
pub fn decompose_rule(question: &str) -> Result<DecomposedQuery, AnnotationError> {
    let mentions = scan(question, ScanMode::AbsoluteOnly);
    let groups = group_ranges(question, &mentions);
    let mut constraints = Vec::new();
    let mut cuts: Vec<std::ops::Range<usize>> = Vec::new();
    for g in &groups {
        let prefix = &question[..g.span.start];
        let (cut_start, conn, edge) = match CONNECTIVE.captures(prefix) {
            Some(c) => {
                let whole = c.get(0).expect("whole match");
                let edge = match c.name("edge").map(|m| m.as_str().to_ascii_lowercase()) {
                    Some(e) if e.contains("start") || e.contains("beginning") => Edge::Start,
                    Some(e) if e.contains("end") || e.contains("close") => Edge::End,
                    _ => Edge::Whole,
                };
                let conn = c.name("conn").map(|m| m.as_str().trim());
                // the opener of a grouped range is already inside the span
                (whole.start(), conn, edge)
            }
            None => (g.span.start, None, Edge::Whole),
        };
        if let Some(c) = classify(g, conn, edge) {
            constraints.push(c);
        }
        // never cut into an earlier group's span
        let floor = cuts.last().map_or(0, |r| r.end);
        cuts.push(cut_start.max(floor)..g.span.end);
    }
    if constraints.is_empty() {
        constraints.push(TemporalConstraint::Unconstrained);
    }
    let q_core = remove_spans(question, &cuts);
    if !has_content_word(&q_core) {
        return Err(AnnotationError::EmptyCore {
            question: question.to_string(),
        });
    }
    Ok(DecomposedQuery {
        q_core,
        constraints,
        source: AnnotationSource::Rule,
    })
}

/// Remove date mentions from text already claimed to be temporally neutral,
/// e.g. a model-written core query.
pub fn strip_date_mentions(text: &str) -> String {
    match decompose_rule(text) {
        Ok(d) => d.q_core,
        Err(_) => String::new(),
    }
}

fn remove_spans(text: &str, cuts: &[std::ops::Range<usize>]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for r in cuts {
        out.push_str(&text[pos..r.start]);
        out.push(' ');
        pos = r.end;
    }
    out.push_str(&text[pos..]);
    tidy(&out)
}

static SPACE_BEFORE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+([?.!,;:])").unwrap());
static DOUBLED_COMMA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r",\s*([?.!,;:])").unwrap());

fn tidy(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let no_space = SPACE_BEFORE_PUNCT.replace_all(&collapsed, "$1");
    let no_comma = DOUBLED_COMMA.replace_all(&no_space, "$1");
    no_comma
        .trim_matches(|c: char| c.is_whitespace() || c == ',')
        .to_string()
}

pub(crate) fn has_content_word(s: &str) -> bool {
    crate::tokenize::terms(s)
        .iter()
        .any(|t| !STOPWORDS.contains(&t.as_str()))
}
