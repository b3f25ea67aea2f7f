//! Time annotation of documents and chunks, and question decomposition.
//!
//! Each stage asks the LLM for strict JSON first. Malformed replies get one
//! repair round (document pass) or go straight to the rule-based route; the
//! rule route is what runs offline with [`crate::providers::StubLlm`].
//! Provider outages are never papered over: `ProviderError::Unavailable`
//! propagates so ingestion can stop at a checkpoint.

use log::debug;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::providers::{ChatMessage, DecodingParams, LlmProvider, ProviderError};
use crate::temporal::{Date, TemporalConstraint, TimeInterval};
use crate::tokenize::split_sentences;

pub mod cache;
pub mod decompose;
pub mod grammar;
pub mod prompts;

pub use cache::{AnnotationCache, CacheKey};
pub use decompose::decompose_rule;
use grammar::{scan, Expr, ScanMode};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("no temporal signal: {reason}")]
    NoTemporalSignal { reason: String },
    #[error("question {question:?} has no content once its time expressions are removed")]
    EmptyCore { question: String },
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Llm,
    Rule,
    Metadata,
    FallbackPub,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    /// Characters taken from each end of a document for the first pass.
    pub head_tail_chars: usize,
    /// Publication estimates outside this window are rejected.
    pub plausibility: TimeInterval,
    pub decoding: DecodingParams,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            head_tail_chars: 1500,
            plausibility: TimeInterval::new(Date::ymd(1900, 1, 1), Date::ymd(2100, 1, 1)).expect("valid window"),
            decoding: DecodingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocPassResult {
    pub pub_time_est: Date,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub source: AnnotationSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkAnnotation {
    pub event_intervals: Vec<TimeInterval>,
    pub source: AnnotationSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposedQuery {
    pub q_core: String,
    pub constraints: Vec<TemporalConstraint>,
    pub source: AnnotationSource,
}

/// First and last `h` characters. A document no longer than `h` characters
/// is all head.
pub fn head_tail(text: &str, h: usize) -> (&str, &str) {
    let n = text.chars().count();
    if n <= h {
        return (text, "");
    }
    let head_end = text.char_indices().nth(h).map_or(text.len(), |(i, _)| i);
    let tail_start = text.char_indices().nth(n - h).map_or(text.len(), |(i, _)| i).max(head_end);
    (&text[..head_end], &text[tail_start..])
}

/// The JSON object embedded in a model reply, tolerating surrounding prose
/// or code fences.
pub fn extract_json_object(reply: &str) -> Option<Value> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&reply[start..=end]).ok()
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM` or `YYYY`; partial dates map to the first
/// day of the period.
fn parse_loose_date(s: &str) -> Option<Date> {
    let s = s.trim();
    if let Ok(d) = s.parse::<Date>() {
        return Some(d);
    }
    let parts: Vec<&str> = s.split('-').collect();
    match parts.as_slice() {
        [y, m] if y.len() == 4 => Date::new(y.parse().ok()?, m.parse().ok()?, 1).ok(),
        [y] if y.len() == 4 => Date::new(y.parse().ok()?, 1, 1).ok(),
        _ => None,
    }
}

/// Keep at most two sentences.
fn clamp_abstract(text: &str) -> String {
    let text = text.trim();
    let sentences = split_sentences(text);
    match sentences.get(1) {
        Some(second) => text[..second.end].trim().to_string(),
        None => text.to_string(),
    }
}

fn parse_doc_reply(reply: &str, cfg: &AnnotationConfig) -> Result<DocPassResult, String> {
    let v = extract_json_object(reply).ok_or("reply is not a JSON object")?;
    let date = v
        .get("pub_date")
        .and_then(Value::as_str)
        .and_then(parse_loose_date)
        .ok_or("missing or unparseable \"pub_date\"")?;
    if !cfg.plausibility.contains(date) {
        return Err(format!("pub_date {date} outside the plausibility window {}", cfg.plausibility));
    }
    let abstract_text = v
        .get("abstract")
        .and_then(Value::as_str)
        .map(clamp_abstract)
        .filter(|a| !a.is_empty())
        .ok_or("missing or empty \"abstract\"")?;
    Ok(DocPassResult {
        pub_time_est: date,
        abstract_text,
        source: AnnotationSource::Llm,
    })
}

/// Only `Unavailable` aborts; every other provider failure counts as a bad
/// reply and falls through to the rule route.
fn complete_or_degrade(
    llm: &dyn LlmProvider,
    messages: &[ChatMessage],
    params: &DecodingParams,
) -> Result<Option<String>, ProviderError> {
    match llm.complete(messages, params) {
        Ok(r) => Ok(Some(r)),
        Err(e @ ProviderError::Unavailable { .. }) => Err(e),
        Err(e) => {
            debug!("LLM call degraded to rule route: {e}");
            Ok(None)
        }
    }
}

/// Rule route for the publication date: first full date in the head, then
/// in the tail, then the first month mention (head, tail), then the first
/// year mention (head, tail). Partial dates map to the period's first day.
pub fn rule_pub_date(head: &str, tail: &str, window: &TimeInterval) -> Option<Date> {
    let mentions = |s: &str| -> Vec<Expr> {
        scan(s, ScanMode::AbsoluteOnly)
            .into_iter()
            .map(|m| m.expr)
            .filter(|e| e.resolve(None).is_some_and(|iv| window.contains(iv.start())))
            .collect()
    };
    let (h, t) = (mentions(head), mentions(tail));
    for precision in [0u8, 1, 3] {
        for list in [&h, &t] {
            if let Some(e) = list.iter().find(|e| e.precision() == precision) {
                return e.resolve(None).map(|iv| iv.start());
            }
        }
    }
    None
}

fn rule_abstract(head: &str) -> String {
    let text = head.trim();
    let sentences = split_sentences(text);
    let end = sentences.get(1).or(sentences.first()).map_or(text.len(), |r| r.end);
    let mut a = text[..end].trim().to_string();
    if a.chars().count() > 400 {
        a = a.chars().take(400).collect();
    }
    a
}

/// First pass over a document's head and tail: publication estimate and a
/// short abstract.
pub fn doc_pass_one(
    llm: &dyn LlmProvider,
    head: &str,
    tail: &str,
    metadata_hint: Option<&str>,
    cfg: &AnnotationConfig,
) -> Result<DocPassResult, AnnotationError> {
    if head.trim().is_empty() {
        return Err(AnnotationError::EmptyInput);
    }
    let prompt = prompts::render(
        prompts::DOC_PASS,
        &[("HEAD", head), ("TAIL", tail), ("METADATA", metadata_hint.unwrap_or("none"))],
    );
    let mut messages = vec![ChatMessage::user(prompt)];
    if let Some(reply) = complete_or_degrade(llm, &messages, &cfg.decoding)? {
        match parse_doc_reply(&reply, cfg) {
            Ok(r) => return Ok(r),
            Err(err) => {
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(prompts::render(prompts::REPAIR, &[("ERROR", &err)])));
                if let Some(repaired) = complete_or_degrade(llm, &messages, &cfg.decoding)? {
                    if let Ok(r) = parse_doc_reply(&repaired, cfg) {
                        return Ok(r);
                    }
                }
            }
        }
    }
    if let Some(date) = rule_pub_date(head, tail, &cfg.plausibility) {
        return Ok(DocPassResult {
            pub_time_est: date,
            abstract_text: rule_abstract(head),
            source: AnnotationSource::Rule,
        });
    }
    if let Some(date) = metadata_hint.and_then(|h| rule_pub_date(h, "", &cfg.plausibility)) {
        return Ok(DocPassResult {
            pub_time_est: date,
            abstract_text: rule_abstract(head),
            source: AnnotationSource::Metadata,
        });
    }
    Err(AnnotationError::NoTemporalSignal {
        reason: "no usable date from the model, the head/tail rules, or the metadata hint".into(),
    })
}

fn parse_chunk_reply(reply: &str) -> Option<Vec<TimeInterval>> {
    let v = extract_json_object(reply)?;
    let events = v.get("events")?.as_array()?;
    let mut out: Vec<TimeInterval> = events
        .iter()
        .filter_map(|e| {
            let start = parse_loose_date(e.get("start")?.as_str()?)?;
            let end = parse_loose_date(e.get("end")?.as_str()?)?;
            TimeInterval::new(start, end).ok()
        })
        .collect();
    out.sort();
    out.dedup();
    Some(out)
}

/// The one-day interval at the publication estimate, used when a chunk
/// yields no event intervals.
pub fn fallback_interval(pub_time_est: Date) -> TimeInterval {
    TimeInterval::day(pub_time_est).expect("single day is a valid interval")
}

/// Second pass over one chunk, using the document context to resolve
/// abbreviated dates. Never returns an empty interval list.
pub fn chunk_pass_two(
    llm: &dyn LlmProvider,
    chunk_text: &str,
    doc: &DocPassResult,
    cfg: &AnnotationConfig,
) -> Result<ChunkAnnotation, ProviderError> {
    let pub_date = doc.pub_time_est.to_string();
    let prompt = prompts::render(
        prompts::CHUNK_PASS,
        &[("PUB_DATE", &pub_date), ("ABSTRACT", &doc.abstract_text), ("CHUNK", chunk_text)],
    );
    let llm_result = complete_or_degrade(llm, &[ChatMessage::user(prompt)], &cfg.decoding)?
        .and_then(|reply| parse_chunk_reply(&reply));
    let (intervals, source) = match llm_result {
        Some(ivs) => (ivs, AnnotationSource::Llm),
        None => (
            grammar::extract_intervals(chunk_text, Some(doc.pub_time_est)),
            AnnotationSource::Rule,
        ),
    };
    if intervals.is_empty() {
        return Ok(ChunkAnnotation {
            event_intervals: vec![fallback_interval(doc.pub_time_est)],
            source: AnnotationSource::FallbackPub,
        });
    }
    Ok(ChunkAnnotation {
        event_intervals: intervals,
        source,
    })
}

#[derive(Deserialize)]
struct LlmConstraint {
    kind: String,
    #[serde(default)]
    start: Option<String>,
    #[serde(default)]
    end: Option<String>,
    #[serde(default)]
    date: Option<String>,
}

impl LlmConstraint {
    fn into_constraint(self) -> Option<TemporalConstraint> {
        let d = |s: &Option<String>| s.as_deref().and_then(parse_loose_date);
        Some(match self.kind.to_ascii_lowercase().as_str() {
            "bounded" => TemporalConstraint::Bounded {
                interval: TimeInterval::new(d(&self.start)?, d(&self.end)?).ok()?,
            },
            "before" => TemporalConstraint::Before { date: d(&self.date)? },
            "after" => TemporalConstraint::After { date: d(&self.date)? },
            "unconstrained" => TemporalConstraint::Unconstrained,
            _ => return None,
        })
    }
}

fn parse_decompose_reply(reply: &str) -> Option<DecomposedQuery> {
    let v = extract_json_object(reply)?;
    let raw_core = v.get("q_core")?.as_str()?;
    // the core must be neutral under the rule grammar too
    let q_core = decompose::strip_date_mentions(raw_core);
    if !decompose::has_content_word(&q_core) {
        return None;
    }
    let raw: Vec<LlmConstraint> = serde_json::from_value(v.get("constraints")?.clone()).ok()?;
    let mut constraints = raw
        .into_iter()
        .map(LlmConstraint::into_constraint)
        .collect::<Option<Vec<_>>>()?;
    if constraints.is_empty() {
        constraints.push(TemporalConstraint::Unconstrained);
    }
    Some(DecomposedQuery {
        q_core,
        constraints,
        source: AnnotationSource::Llm,
    })
}

/// Split a question into a temporally neutral core and raw constraints.
/// The LLM route is tried first; an unusable reply falls back to
/// [`decompose_rule`].
pub fn decompose_question(
    llm: &dyn LlmProvider,
    question: &str,
    params: &DecodingParams,
) -> Result<DecomposedQuery, AnnotationError> {
    if question.trim().is_empty() {
        return Err(AnnotationError::EmptyInput);
    }
    let prompt = prompts::render(prompts::DECOMPOSE, &[("QUESTION", question)]);
    if let Some(reply) = complete_or_degrade(llm, &[ChatMessage::user(prompt)], params)? {
        if let Some(d) = parse_decompose_reply(&reply) {
            return Ok(d);
        }
    }
    decompose_rule(question)
}
