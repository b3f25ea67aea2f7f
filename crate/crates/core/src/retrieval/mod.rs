//! TA-RAG, naive dense and BM25 retrieval over a [`CorpusIndex`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{decompose_question, AnnotationError, DecomposedQuery};
use crate::ingest::CorpusIndex;
use crate::providers::{build_hypothetical_embedding, embed_texts, DecodingParams, HypoMode, ProviderError, Providers};
use crate::temporal::{
    calendar_buckets, choose_granularity, resolve_constraints, sample_anchors, Date, Granularity, TemporalConstraint,
    TemporalError, TimeInterval, DEFAULT_MAX_ANCHORS,
};
use crate::vector_index::{ScoredHit, VectorIndexError};
use crate::ChunkId;

pub mod bm25;

/// Reason code when every constraint falls outside the corpus timeline.
pub const REASON_OUTSIDE_CORPUS: &str = "all_constraints_empty";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Vector(#[from] VectorIndexError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ta_rag")]
    TaRag,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "bm25")]
    Bm25,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TaRag, Method::Naive, Method::Bm25];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::TaRag => "ta_rag",
            Method::Naive => "naive",
            Method::Bm25 => "bm25",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ta_rag" | "tarag" => Ok(Method::TaRag),
            "naive" | "naive_rag" | "dense" => Ok(Method::Naive),
            "bm25" => Ok(Method::Bm25),
            other => Err(format!("unknown method {other:?} (expected ta_rag, naive or bm25)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalOverrides {
    pub granularity: Option<Granularity>,
    pub max_anchors: Option<usize>,
    pub hypo_mode: Option<HypoMode>,
}

/// The question stem only; answer choices never reach retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub question: String,
    pub k: usize,
    pub method: Method,
    #[serde(default)]
    pub overrides: RetrievalOverrides,
}

impl RetrievalRequest {
    pub fn new(question: impl Into<String>, k: usize, method: Method) -> Self {
        RetrievalRequest {
            question: question.into(),
            k,
            method,
            overrides: RetrievalOverrides::default(),
        }
    }

    pub fn with_overrides(mut self, overrides: RetrievalOverrides) -> Self {
        self.overrides = overrides;
        self
    }
}

/// Stage timings in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub decompose_ms: f64,
    pub embed_ms: f64,
    pub filter_ms: f64,
    pub rank_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub candidate_count: usize,
    pub anchor_count: usize,
    pub anchors: Vec<Date>,
    pub granularity: Option<Granularity>,
    /// Fewer candidates than `k` survived the temporal filter.
    pub short_fill: bool,
    pub reason: Option<String>,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub method: Method,
    pub k: usize,
    pub hits: Vec<ScoredHit>,
    /// Empty for naive and BM25.
    pub resolved_intervals: Vec<TimeInterval>,
    pub decomposition: Option<DecomposedQuery>,
    pub diagnostics: Diagnostics,
}

impl RetrievalResult {
    pub fn chunk_ids(&self) -> Vec<ChunkId> {
        self.hits.iter().map(|h| h.chunk_id).collect()
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn check_k(req: &RetrievalRequest) -> Result<(), RetrievalError> {
    if req.k == 0 {
        return Err(RetrievalError::InvalidRequest("k must be at least 1".into()));
    }
    if req.question.trim().is_empty() {
        return Err(RetrievalError::InvalidRequest("empty question".into()));
    }
    Ok(())
}

pub fn retrieve(index: &CorpusIndex, providers: &Providers, req: &RetrievalRequest) -> Result<RetrievalResult, RetrievalError> {
    match req.method {
        Method::TaRag => retrieve_ta(index, providers, req),
        Method::Naive => retrieve_naive(index, providers, req),
        Method::Bm25 => retrieve_bm25(index, req),
    }
}

/// Decompose, resolve, filter by event interval, rank the candidates
/// against the anchored query embedding.
pub fn retrieve_ta(index: &CorpusIndex, providers: &Providers, req: &RetrievalRequest) -> Result<RetrievalResult, RetrievalError> {
    check_k(req)?;
    let t0 = Instant::now();
    let mut diag = Diagnostics::default();
    diag.warnings.extend(index.check_embedder(providers.embedder.as_ref()));

    let dq = decompose_question(providers.llm.as_ref(), &req.question, &DecodingParams::default())?;
    diag.timing.decompose_ms = ms_since(t0);
    retrieve_ta_decomposed(index, providers, req, dq, diag, t0)
}

/// TA-RAG from an already decomposed question.
pub fn retrieve_ta_decomposed(
    index: &CorpusIndex,
    providers: &Providers,
    req: &RetrievalRequest,
    dq: DecomposedQuery,
    mut diag: Diagnostics,
    t0: Instant,
) -> Result<RetrievalResult, RetrievalError> {
    let empty = |diag: Diagnostics, dq: DecomposedQuery, reason: &str| {
        let mut diag = diag;
        diag.reason = Some(reason.to_string());
        diag.short_fill = true;
        diag.timing.total_ms = ms_since(t0);
        RetrievalResult {
            method: Method::TaRag,
            k: req.k,
            hits: Vec::new(),
            resolved_intervals: Vec::new(),
            decomposition: Some(dq),
            diagnostics: diag,
        }
    };
    let intervals = match resolve_constraints(&dq.constraints, index.corpus_bounds()) {
        Ok(ivs) => ivs,
        Err(TemporalError::AllConstraintsEmpty { .. }) => return Ok(empty(diag, dq, REASON_OUTSIDE_CORPUS)),
        Err(e) => return Err(e.into()),
    };
    let g = match req.overrides.granularity {
        Some(g) => g,
        None => choose_granularity(&intervals)?,
    };
    let anchors = sample_anchors(&intervals, g, req.overrides.max_anchors.unwrap_or(DEFAULT_MAX_ANCHORS));
    diag.granularity = Some(g);
    diag.anchor_count = anchors.len();

    let t = Instant::now();
    let e_hypo = build_hypothetical_embedding(
        providers.embedder.as_ref(),
        &dq.q_core,
        &anchors,
        g,
        req.overrides.hypo_mode.unwrap_or_default(),
    )?;
    diag.anchors = anchors;
    diag.timing.embed_ms = ms_since(t);

    let t = Instant::now();
    let unconstrained = dq
        .constraints
        .iter()
        .all(|c| matches!(c, TemporalConstraint::Unconstrained));
    let candidates = (!unconstrained).then(|| index.interval_index().query_overlapping(&intervals));
    diag.candidate_count = candidates.as_ref().map_or(index.len(), Vec::len);
    diag.timing.filter_ms = ms_since(t);

    let t = Instant::now();
    let hits = index.vector_index().top_k(&e_hypo, candidates.as_deref(), req.k)?;
    diag.timing.rank_ms = ms_since(t);
    diag.short_fill = diag.candidate_count < req.k;

    if cfg!(debug_assertions) && !unconstrained {
        for h in &hits {
            let c = index.chunk(h.chunk_id).expect("hit resolves");
            debug_assert!(
                c.event_intervals.iter().any(|e| intervals.iter().any(|q| e.overlaps(q))),
                "hit {} violates the temporal filter",
                h.chunk_id
            );
        }
    }
    diag.timing.total_ms = ms_since(t0);
    Ok(RetrievalResult {
        method: Method::TaRag,
        k: req.k,
        hits,
        resolved_intervals: intervals,
        decomposition: Some(dq),
        diagnostics: diag,
    })
}

/// Embed the raw question and search every chunk.
pub fn retrieve_naive(index: &CorpusIndex, providers: &Providers, req: &RetrievalRequest) -> Result<RetrievalResult, RetrievalError> {
    check_k(req)?;
    let t0 = Instant::now();
    let mut diag = Diagnostics::default();
    diag.warnings.extend(index.check_embedder(providers.embedder.as_ref()));
    let q = embed_texts(providers.embedder.as_ref(), &[req.question.as_str()])?
        .pop()
        .expect("one vector per text");
    diag.timing.embed_ms = ms_since(t0);
    let t = Instant::now();
    let hits = index.vector_index().top_k(&q, None, req.k)?;
    diag.timing.rank_ms = ms_since(t);
    diag.candidate_count = index.len();
    diag.timing.total_ms = ms_since(t0);
    Ok(RetrievalResult {
        method: Method::Naive,
        k: req.k,
        hits,
        resolved_intervals: Vec::new(),
        decomposition: None,
        diagnostics: diag,
    })
}

pub fn retrieve_bm25(index: &CorpusIndex, req: &RetrievalRequest) -> Result<RetrievalResult, RetrievalError> {
    check_k(req)?;
    let t0 = Instant::now();
    let bm25 = index.bm25();
    let mut diag = Diagnostics::default();
    let hits = bm25.top_k(&req.question, req.k);
    diag.candidate_count = bm25.scores(&req.question).len();
    diag.timing.rank_ms = ms_since(t0);
    diag.timing.total_ms = diag.timing.rank_ms;
    Ok(RetrievalResult {
        method: Method::Bm25,
        k: req.k,
        hits,
        resolved_intervals: Vec::new(),
        decomposition: None,
        diagnostics: diag,
    })
}

/// Fraction of the calendar buckets of `intervals` at `g` that some hit's
/// event interval overlaps.
pub fn temporal_coverage(hits: &[ScoredHit], index: &CorpusIndex, intervals: &[TimeInterval], g: Granularity) -> f64 {
    let buckets = calendar_buckets(intervals, g);
    if buckets.is_empty() {
        return 0.0;
    }
    let events: Vec<&TimeInterval> = hits
        .iter()
        .filter_map(|h| index.chunk(h.chunk_id))
        .flat_map(|c| c.event_intervals.iter())
        .collect();
    let covered = buckets
        .iter()
        .filter(|b| events.iter().any(|e| e.overlaps(b)))
        .count();
    covered as f64 / buckets.len() as f64
}
