//! Multiple-choice evaluation harness.
//!
//! Retrieval sees only the question stem. The generator then gets the
//! chronological context, the stem and the four choices, and must reply with
//! a choice. Replies that cannot be parsed, and items whose retrieval or
//! generation failed, score as incorrect and are tallied separately.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::decompose_rule;
use crate::context::build_context;
use crate::ingest::CorpusIndex;
use crate::providers::{ChatMessage, DecodingParams, LlmProvider, Providers};
use crate::retrieval::{retrieve, temporal_coverage, Method, RetrievalOverrides, RetrievalRequest};
use crate::temporal::{calendar_buckets, choose_granularity, resolve_constraints, Granularity, TemporalConstraint, TimeInterval};
use crate::tokenize::TokenizerConfig;
use crate::vector_index::ScoredHit;
use crate::ChunkId;

pub mod compare;
pub mod generator;
pub mod import;

pub use compare::{compare_methods, Comparison};
pub use generator::{answer_prompt, parse_choice, ConstantChoiceLlm, OverlapOracleLlm};
pub use import::{import_eval_set, FieldMap};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("item {item_id:?}: {message}")]
    InvalidItem { item_id: String, message: String },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    SpecificYearTrend,
    BeforeYearAnchor,
    AfterYearAnchor,
    BeforeMonthAnchor,
    AfterMonthAnchor,
    TimeIntervalYears,
    TimeIntervalMonths,
}

impl QueryType {
    pub const ALL: [QueryType; 7] = [
        QueryType::SpecificYearTrend,
        QueryType::BeforeYearAnchor,
        QueryType::AfterYearAnchor,
        QueryType::BeforeMonthAnchor,
        QueryType::AfterMonthAnchor,
        QueryType::TimeIntervalYears,
        QueryType::TimeIntervalMonths,
    ];

    /// Items asking about a span with two explicit endpoints.
    pub fn is_range(self) -> bool {
        matches!(self, QueryType::TimeIntervalYears | QueryType::TimeIntervalMonths)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::SpecificYearTrend => "specific_year_trend",
            QueryType::BeforeYearAnchor => "before_year_anchor",
            QueryType::AfterYearAnchor => "after_year_anchor",
            QueryType::BeforeMonthAnchor => "before_month_anchor",
            QueryType::AfterMonthAnchor => "after_month_anchor",
            QueryType::TimeIntervalYears => "time_interval_years",
            QueryType::TimeIntervalMonths => "time_interval_months",
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryType {
    type Err = String;

    /// Accepts the snake_case names and display forms such as
    /// "Time Interval (Months)" or "Before Month Anchor".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .to_ascii_lowercase()
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        QueryType::ALL
            .into_iter()
            .find(|q| q.as_str() == norm)
            .ok_or_else(|| format!("unknown query type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqaItem {
    pub item_id: String,
    pub question: String,
    pub choices: Vec<String>,
    pub gold_index: usize,
    pub query_type: QueryType,
}

impl McqaItem {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |message: &str| EvalError::InvalidItem {
            item_id: self.item_id.clone(),
            message: message.to_string(),
        };
        if self.choices.len() != 4 {
            return Err(bad(&format!("expected 4 choices, found {}", self.choices.len())));
        }
        if self.gold_index > 3 {
            return Err(bad(&format!("gold_index {} out of range", self.gold_index)));
        }
        if self.question.trim().is_empty() {
            return Err(bad("empty question"));
        }
        Ok(())
    }
}

/// Read and validate a JSON-lines evaluation set.
pub fn load_eval_set(path: impl AsRef<Path>) -> Result<Vec<McqaItem>, EvalError> {
    let path = path.as_ref();
    let io = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut items = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let item: McqaItem = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        item.validate()?;
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Token budget for the rendered context.
    pub context_tokens: usize,
    pub tokenizer: TokenizerConfig,
    pub overrides: RetrievalOverrides,
    pub decoding: DecodingParams,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            context_tokens: 16384,
            tokenizer: TokenizerConfig::default(),
            overrides: RetrievalOverrides::default(),
            decoding: DecodingParams {
                temperature: 0.0,
                max_tokens: 16,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum ItemStatus {
    Answered,
    Unparseable(String),
    RetrievalFailed(String),
    GenerationFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub item_id: String,
    pub query_type: QueryType,
    pub predicted: Option<usize>,
    pub correct: bool,
    pub status: ItemStatus,
    pub hits: Vec<ChunkId>,
    pub latency_ms: f64,
    pub coverage: Option<f64>,
    pub boundary: Option<BoundaryCount>,
}

/// Hits overlapping the query range, and how many of those touch only
/// its first or last bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCount {
    pub boundary: usize,
    pub in_range: usize,
}

/// Count boundary-only hits within `range` bucketed at `g`.
pub fn boundary_count(hits: &[ScoredHit], index: &CorpusIndex, range: &[TimeInterval], g: Granularity) -> BoundaryCount {
    let buckets = calendar_buckets(range, g);
    let mut out = BoundaryCount::default();
    let Some(last) = buckets.len().checked_sub(1) else {
        return out;
    };
    for h in hits {
        let Some(c) = index.chunk(h.chunk_id) else { continue };
        let touched: Vec<usize> = (0..buckets.len())
            .filter(|&i| c.event_intervals.iter().any(|e| e.overlaps(&buckets[i])))
            .collect();
        if touched.is_empty() {
            continue;
        }
        out.in_range += 1;
        if touched.iter().all(|&i| i == 0 || i == last) {
            out.boundary += 1;
        }
    }
    out
}

/// Pooled fraction of in-range hits that touch only a boundary bucket;
/// 0 when no hit is in range.
pub fn endpoint_bias_score(counts: impl IntoIterator<Item = BoundaryCount>) -> f64 {
    let (b, n) = counts
        .into_iter()
        .fold((0usize, 0usize), |(b, n), c| (b + c.boundary, n + c.in_range));
    if n == 0 {
        0.0
    } else {
        b as f64 / n as f64
    }
}

/// The question's time range under the rule grammar, and the bucket
/// granularity for coverage and bias: the query's own calendar unit, one
/// level coarser than its anchors. `None` for questions without an
/// explicit constraint.
pub fn reference_range(question: &str, bounds: TimeInterval) -> Option<(Vec<TimeInterval>, Granularity)> {
    let dq = decompose_rule(question).ok()?;
    if dq.constraints.iter().all(|c| matches!(c, TemporalConstraint::Unconstrained)) {
        return None;
    }
    let ivs = resolve_constraints(&dq.constraints, bounds).ok()?;
    let g = choose_granularity(&ivs).ok()?.coarser();
    Some((ivs, g))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalDiagnostics {
    pub mean_temporal_coverage: Option<f64>,
    pub endpoint_bias_score: Option<f64>,
    pub mean_latency_ms: f64,
    /// Totals over all runs.
    pub unparseable_replies: usize,
    pub retrieval_failures: usize,
    pub generation_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub k: usize,
    pub runs: usize,
    pub items: usize,
    pub per_run_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_dev: f64,
    pub per_query_type_accuracy: BTreeMap<QueryType, f64>,
    pub diagnostics: EvalDiagnostics,
    /// Per-item outcomes of the first run.
    pub outcomes: Vec<ItemOutcome>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalReport {
    /// Check that the summary statistics follow from the per-run values.
    pub fn validate(&self) -> Result<(), String> {
        if self.per_run_accuracy.len() != self.runs {
            return Err(format!("{} per-run values for {} runs", self.per_run_accuracy.len(), self.runs));
        }
        if let Some(a) = self.per_run_accuracy.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(format!("accuracy {a} outside [0, 1]"));
        }
        let (mean, std) = mean_std(&self.per_run_accuracy);
        if (mean - self.mean_accuracy).abs() > 1e-9 {
            return Err(format!("mean {} does not match recomputed {mean}", self.mean_accuracy));
        }
        if (std - self.std_dev).abs() > 1e-9 {
            return Err(format!("std {} does not match recomputed {std}", self.std_dev));
        }
        Ok(())
    }
}

fn evaluate_item(
    index: &CorpusIndex,
    providers: &Providers,
    generator: &dyn LlmProvider,
    item: &McqaItem,
    method: Method,
    k: usize,
    opts: &EvalOptions,
) -> ItemOutcome {
    let t0 = Instant::now();
    let mut out = ItemOutcome {
        item_id: item.item_id.clone(),
        query_type: item.query_type,
        predicted: None,
        correct: false,
        status: ItemStatus::Answered,
        hits: Vec::new(),
        latency_ms: 0.0,
        coverage: None,
        boundary: None,
    };
    // only the stem goes to retrieval
    let req = RetrievalRequest::new(item.question.clone(), k, method).with_overrides(opts.overrides);
    let result = match retrieve(index, providers, &req) {
        Ok(r) => r,
        Err(e) => {
            out.status = ItemStatus::RetrievalFailed(e.to_string());
            out.latency_ms = t0.elapsed().as_secs_f64() * 1e3;
            return out;
        }
    };
    out.hits = result.chunk_ids();
    if let Some((range, g)) = reference_range(&item.question, index.corpus_bounds()) {
        out.coverage = Some(temporal_coverage(&result.hits, index, &range, g));
        if item.query_type.is_range() {
            out.boundary = Some(boundary_count(&result.hits, index, &range, g));
        }
    }
    let reply = build_context(&result.hits, index, opts.context_tokens, &opts.tokenizer)
        .map_err(|e| e.to_string())
        .and_then(|ctx| {
            let prompt = answer_prompt(&ctx.rendered, &item.question, &item.choices);
            generator
                .complete(&[ChatMessage::user(prompt)], &opts.decoding)
                .map_err(|e| e.to_string())
        });
    out.latency_ms = t0.elapsed().as_secs_f64() * 1e3;
    match reply {
        Err(e) => out.status = ItemStatus::GenerationFailed(e),
        Ok(reply) => match parse_choice(&reply, &item.choices) {
            Some(i) => {
                out.predicted = Some(i);
                out.correct = i == item.gold_index;
            }
            None => out.status = ItemStatus::Unparseable(reply),
        },
    }
    out
}

/// Evaluate `items` `runs` times with one retrieval method at one `k`.
///
/// Items within a run are evaluated concurrently; outcomes are reduced in
/// item order, so the report does not depend on completion order.
#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    index: &CorpusIndex,
    providers: &Providers,
    generator: &dyn LlmProvider,
    items: &[McqaItem],
    method: Method,
    k: usize,
    runs: usize,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    if runs == 0 || k == 0 {
        return Err(EvalError::InvalidArgument("runs and k must be at least 1".into()));
    }
    for item in items {
        item.validate()?;
    }
    let mut per_run = Vec::with_capacity(runs);
    let mut per_type_runs: BTreeMap<QueryType, Vec<f64>> = BTreeMap::new();
    let mut diag = EvalDiagnostics::default();
    let mut first_run = Vec::new();
    let mut latency_sum = 0.0;
    for run in 0..runs {
        let outcomes: Vec<ItemOutcome> = items
            .par_iter()
            .map(|item| evaluate_item(index, providers, generator, item, method, k, opts))
            .collect();
        let correct = outcomes.iter().filter(|o| o.correct).count();
        per_run.push(correct as f64 / items.len() as f64);
        let mut by_type: BTreeMap<QueryType, (usize, usize)> = BTreeMap::new();
        for o in &outcomes {
            let e = by_type.entry(o.query_type).or_default();
            e.0 += usize::from(o.correct);
            e.1 += 1;
            latency_sum += o.latency_ms;
            match o.status {
                ItemStatus::Answered => {}
                ItemStatus::Unparseable(_) => diag.unparseable_replies += 1,
                ItemStatus::RetrievalFailed(_) => diag.retrieval_failures += 1,
                ItemStatus::GenerationFailed(_) => diag.generation_failures += 1,
            }
        }
        for (t, (c, n)) in by_type {
            per_type_runs.entry(t).or_default().push(c as f64 / n as f64);
        }
        if run == 0 {
            first_run = outcomes;
        }
    }
    let coverages: Vec<f64> = first_run.iter().filter_map(|o| o.coverage).collect();
    diag.mean_temporal_coverage = (!coverages.is_empty()).then(|| mean_std(&coverages).0);
    let bias: Vec<BoundaryCount> = first_run.iter().filter_map(|o| o.boundary).collect();
    diag.endpoint_bias_score = (!bias.is_empty()).then(|| endpoint_bias_score(bias));
    diag.mean_latency_ms = latency_sum / (runs * items.len()) as f64;
    let (mean, std) = mean_std(&per_run);
    Ok(EvalReport {
        method,
        k,
        runs,
        items: items.len(),
        per_run_accuracy: per_run,
        mean_accuracy: mean,
        std_dev: std,
        per_query_type_accuracy: per_type_runs.into_iter().map(|(t, v)| (t, mean_std(&v).0)).collect(),
        diagnostics: diag,
        outcomes: first_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_type_names() {
        assert_eq!("Time Interval (Months)".parse(), Ok(QueryType::TimeIntervalMonths));
        assert_eq!("before_month_anchor".parse(), Ok(QueryType::BeforeMonthAnchor));
        assert_eq!("Specific Year Trend".parse(), Ok(QueryType::SpecificYearTrend));
        assert!("Sometime".parse::<QueryType>().is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[0.7, 0.8, 0.9]);
        assert!((m - 0.8).abs() < 1e-12);
        assert!((s - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn pooled_bias() {
        let counts = [
            BoundaryCount { boundary: 3, in_range: 10 },
            BoundaryCount { boundary: 0, in_range: 0 },
        ];
        assert!((endpoint_bias_score(counts) - 0.3).abs() < 1e-12);
        assert_eq!(endpoint_bias_score([]), 0.0);
    }

    #[test]
    fn reference_range_uses_the_query_unit() {
        let bounds = TimeInterval::new(crate::Date::ymd(2010, 1, 1), crate::Date::ymd(2023, 1, 1)).unwrap();
        let (ivs, g) = reference_range("trend of acme from 2015 to 2017", bounds).unwrap();
        assert_eq!(ivs, vec![TimeInterval::new(crate::Date::ymd(2015, 1, 1), crate::Date::ymd(2018, 1, 1)).unwrap()]);
        assert_eq!(g, Granularity::Year);
        assert!(reference_range("trend of acme", bounds).is_none());
    }
}
