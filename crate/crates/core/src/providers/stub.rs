//! Deterministic, endpoint-free provider doubles.

use serde::{Deserialize, Serialize};

use super::{ChatMessage, DecodingParams, EmbeddingProvider, LlmProvider, ProviderError};
use crate::tokenize::terms;

pub const STUB_DEFAULT_DIM: usize = 64;
pub const STUB_MIN_DIM: usize = 32;

const MONTH_TOKENS: &[(&str, usize)] = &[
    ("january", 0),
    ("jan", 0),
    ("february", 1),
    ("feb", 1),
    ("march", 2),
    ("mar", 2),
    ("april", 3),
    ("apr", 3),
    ("may", 4),
    ("june", 5),
    ("jun", 5),
    ("july", 6),
    ("jul", 6),
    ("august", 7),
    ("aug", 7),
    ("september", 8),
    ("sep", 8),
    ("sept", 8),
    ("october", 9),
    ("oct", 9),
    ("november", 10),
    ("nov", 10),
    ("december", 11),
    ("dec", 11),
];

/// Feature-hashing embedder.
///
/// Layout of a `dim`-wide vector: buckets `0..12` hold month-name counts,
/// the next `min(16, dim / 4)` buckets hold year counts (`year mod n`), and
/// the remainder holds signed hashes of every other lowercased word token.
/// Signed hashing keeps the expected similarity of texts with no shared
/// tokens at zero.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    year_buckets: usize,
}

impl StubEmbedder {
    /// Panics if `dim < 32`.
    pub fn new(dim: usize) -> Self {
        Self::try_new(dim).expect("stub embedder dimension")
    }

    pub fn try_new(dim: usize) -> Result<Self, ProviderError> {
        if dim < STUB_MIN_DIM {
            return Err(ProviderError::Config(format!(
                "stub embedder needs dim >= {STUB_MIN_DIM}, got {dim}"
            )));
        }
        Ok(StubEmbedder {
            dim,
            year_buckets: (dim / 4).min(16),
        })
    }

    fn word_region(&self) -> (usize, usize) {
        let start = 12 + self.year_buckets;
        (start, self.dim - start)
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let (word_start, word_len) = self.word_region();
        for term in terms(text) {
            if let Some(year) = year_token(&term) {
                v[12 + (year as usize) % self.year_buckets] += 1.0;
            } else if let Some(m) = month_token(&term) {
                v[m] += 1.0;
            } else {
                let h = fnv1a(term.as_bytes());
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                v[word_start + (h % word_len as u64) as usize] += sign;
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            // no countable tokens, or an exact signed cancellation
            let h = fnv1a(text.trim().as_bytes());
            v[word_start + (h % word_len as u64) as usize] = 1.0;
        }
        v
    }
}

impl Default for StubEmbedder {
    fn default() -> Self {
        StubEmbedder::new(STUB_DEFAULT_DIM)
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn id(&self) -> String {
        format!("stub-hash-v1/dim={}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn year_token(term: &str) -> Option<u32> {
    if term.len() != 4 || !term.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let y: u32 = term.parse().ok()?;
    (1900..=2099).contains(&y).then_some(y)
}

fn month_token(term: &str) -> Option<usize> {
    MONTH_TOKENS.iter().find(|(t, _)| *t == term).map(|(_, m)| *m)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    /// Substring searched for in the concatenated message contents.
    pub contains: String,
    pub reply: String,
}

/// Rule-table LLM: the first rule whose `contains` occurs in the prompt
/// answers, otherwise `default_reply`. A pure function of its input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubLlm {
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default)]
    pub default_reply: String,
}

impl StubLlm {
    pub fn echo(reply: impl Into<String>) -> Self {
        StubLlm {
            rules: Vec::new(),
            default_reply: reply.into(),
        }
    }

    pub fn with_rule(mut self, contains: impl Into<String>, reply: impl Into<String>) -> Self {
        self.rules.push(StubRule {
            contains: contains.into(),
            reply: reply.into(),
        });
        self
    }
}

impl LlmProvider for StubLlm {
    fn id(&self) -> String {
        "stub-rules-v1".into()
    }

    fn complete(&self, messages: &[ChatMessage], _params: &DecodingParams) -> Result<String, ProviderError> {
        let prompt: String = messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        Ok(self
            .rules
            .iter()
            .find(|r| prompt.contains(&r.contains))
            .map(|r| r.reply.clone())
            .unwrap_or_else(|| self.default_reply.clone()))
    }
}
