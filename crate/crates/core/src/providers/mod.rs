//! Embedding and LLM provider abstractions.
//!
//! Every model call in the crate goes through [`EmbeddingProvider`] or
//! [`LlmProvider`]. Each has an HTTP client ([`remote`]) and a deterministic
//! offline stub ([`stub`]) so the whole pipeline runs without network
//! access.

use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::temporal::{render_anchor, Date, Granularity};
use crate::vector_index::normalize;

pub mod remote;
pub mod stub;

pub use remote::{RemoteEmbedder, RemoteLlm, RetryPolicy};
pub use stub::{StubEmbedder, StubLlm, StubRule};

/// Norm below which an averaged query embedding is rejected.
pub const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("batch of {size} texts exceeds the provider limit")]
    BatchTooLarge { size: usize },
    #[error("text at position {index} is empty")]
    EmptyText { index: usize },
    #[error("nothing to embed")]
    EmptyBatch,
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned a {got}-dimensional vector, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned a zero or non-finite vector")]
    ZeroVector,
    #[error("mean of the anchored query embeddings is degenerate (norm < 1e-9)")]
    DegenerateMean,
    #[error("hypothetical embedding needs at least one anchor")]
    NoAnchors,
    #[error("malformed provider response: {0}")]
    InvalidResponse(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in index manifests.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    /// Raw backend embeddings, one per text, in order. Callers use
    /// [`embed_texts`], which validates input and normalizes output.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, messages: &[ChatMessage], params: &DecodingParams) -> Result<String, ProviderError>;
}

/// The providers a pipeline stage needs.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub llm: Arc<dyn LlmProvider>,
}

impl Providers {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, llm: Arc<dyn LlmProvider>) -> Self {
        Providers { embedder, llm }
    }

    /// Stub embedder of the given dimension and an LLM stub with no rules,
    /// which pushes every annotation stage onto its rule-based route.
    pub fn offline(dim: usize) -> Self {
        Providers {
            embedder: Arc::new(StubEmbedder::new(dim)),
            llm: Arc::new(StubLlm::default()),
        }
    }
}

/// Embed `texts` and L2-normalize every vector.
pub fn embed_texts<S: AsRef<str>>(p: &dyn EmbeddingProvider, texts: &[S]) -> Result<Vec<Vec<f32>>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::EmptyBatch);
    }
    let owned: Vec<String> = texts
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let t = t.as_ref();
            if t.trim().is_empty() {
                Err(ProviderError::EmptyText { index })
            } else {
                Ok(t.to_string())
            }
        })
        .collect::<Result<_, _>>()?;
    let mut vectors = p.embed_batch(&owned)?;
    if vectors.len() != owned.len() {
        return Err(ProviderError::CountMismatch {
            expected: owned.len(),
            got: vectors.len(),
        });
    }
    let dim = p.dim();
    for v in &mut vectors {
        if v.len() != dim {
            return Err(ProviderError::DimensionMismatch { expected: dim, got: v.len() });
        }
        if !normalize(v) {
            return Err(ProviderError::ZeroVector);
        }
    }
    Ok(vectors)
}

/// How anchored variant embeddings are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypoMode {
    /// Normalize each variant, average, renormalize.
    #[default]
    NormalizedMean,
    /// Average raw backend vectors, then normalize the mean.
    RawMean,
}

/// The hypothetical temporal query embedding: the normalized mean of the
/// embeddings of `render_anchor(t, g, q_core)` over all anchors `t`.
///
/// Anchors are summed in date order, so the result does not depend on the
/// order they are passed in.
pub fn build_hypothetical_embedding(
    p: &dyn EmbeddingProvider,
    q_core: &str,
    anchors: &[Date],
    g: Granularity,
    mode: HypoMode,
) -> Result<Vec<f32>, ProviderError> {
    if anchors.is_empty() {
        return Err(ProviderError::NoAnchors);
    }
    let mut sorted = anchors.to_vec();
    sorted.sort();
    let variants: Vec<String> = sorted.iter().map(|&d| render_anchor(d, g, q_core)).collect();
    let vectors = match mode {
        HypoMode::NormalizedMean => embed_texts(p, &variants)?,
        HypoMode::RawMean => {
            let raw = p.embed_batch(&variants)?;
            if raw.len() != variants.len() {
                return Err(ProviderError::CountMismatch {
                    expected: variants.len(),
                    got: raw.len(),
                });
            }
            raw
        }
    };
    let dim = p.dim();
    let mut sum = vec![0f64; dim];
    for v in &vectors {
        if v.len() != dim {
            return Err(ProviderError::DimensionMismatch { expected: dim, got: v.len() });
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += f64::from(*x);
        }
    }
    let n = vectors.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm >= DEGENERATE_NORM) {
        return Err(ProviderError::DegenerateMean);
    }
    Ok(mean.into_iter().map(|x| (x / norm) as f32).collect())
}

/// Counting semaphore bounding concurrent outbound requests.
#[derive(Debug)]
pub struct InflightLimiter {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct InflightPermit<'a> {
    limiter: &'a InflightLimiter,
}

impl InflightLimiter {
    pub fn new(limit: usize) -> Self {
        InflightLimiter {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> InflightPermit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InflightPermit { limiter: self }
    }
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut active = self.limiter.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.limiter.freed.notify_one();
    }
}
