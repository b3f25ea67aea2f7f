//! Chronological context assembly for the generator prompt.
//!
//! Each block renders as `[Published: YYYY-MM-DD]\n<text>\n`. Text lines
//! that begin with `[Published:` or a backslash get a leading backslash, so
//! [`parse_context`] recovers every block exactly.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CorpusIndex;
use crate::temporal::Date;
use crate::tokenize::TokenizerConfig;
use crate::vector_index::{rank_order, ScoredHit};
use crate::ChunkId;

const HEADER_PREFIX: &str = "[Published: ";

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("hit refers to unknown chunk {0}")]
    UnknownChunkId(ChunkId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub pub_time_est: Date,
    pub chunk_id: ChunkId,
    pub doc_id: String,
    pub seq: u32,
    pub score: f32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredContext {
    pub blocks: Vec<ContextBlock>,
    pub rendered: String,
    pub token_estimate: usize,
    pub truncated: bool,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if line.starts_with("[Published:") || line.starts_with('\\') {
            out.push('\\');
        }
        out.push_str(line);
    }
    out
}

fn unescape(text: &str) -> String {
    text.split('\n')
        .map(|line| line.strip_prefix('\\').unwrap_or(line))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_block(date: Date, text: &str) -> String {
    format!("{HEADER_PREFIX}{date}]\n{}\n", escape(text))
}

fn chronological(a: &ContextBlock, b: &ContextBlock) -> Ordering {
    a.pub_time_est
        .cmp(&b.pub_time_est)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.seq.cmp(&b.seq))
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

/// Order hits by publication date and render them within `token_budget`.
///
/// Over budget, the lowest-ranked hits are dropped whole until the rest
/// fits; survivors stay in chronological order.
pub fn build_context(
    hits: &[ScoredHit],
    index: &CorpusIndex,
    token_budget: usize,
    tok: &TokenizerConfig,
) -> Result<StructuredContext, ContextError> {
    let mut ranked = hits.to_vec();
    ranked.sort_by(rank_order);
    ranked.dedup_by_key(|h| h.chunk_id);
    let mut blocks = Vec::with_capacity(ranked.len());
    let mut costs = Vec::with_capacity(ranked.len());
    for h in &ranked {
        let c = index.chunk(h.chunk_id).ok_or(ContextError::UnknownChunkId(h.chunk_id))?;
        costs.push(tok.count(&render_block(c.pub_time_est, &c.text)));
        blocks.push(ContextBlock {
            pub_time_est: c.pub_time_est,
            chunk_id: c.chunk_id,
            doc_id: c.doc_id.clone(),
            seq: c.seq,
            score: h.score,
            text: c.text.clone(),
        });
    }
    let mut total: usize = costs.iter().sum();
    let mut truncated = false;
    while total > token_budget {
        let cost = costs.pop().expect("over budget implies a block remains");
        blocks.pop();
        total -= cost;
        truncated = true;
    }
    blocks.sort_by(chronological);
    let rendered: String = blocks.iter().map(|b| render_block(b.pub_time_est, &b.text)).collect();
    Ok(StructuredContext {
        blocks,
        rendered,
        token_estimate: total,
        truncated,
    })
}

/// Recover `(date, text)` pairs from rendered context.
pub fn parse_context(rendered: &str) -> Option<Vec<(Date, String)>> {
    let mut out: Vec<(Date, String)> = Vec::new();
    let mut body: Option<(Date, String)> = None;
    for line in rendered.split_inclusive('\n') {
        if let Some(rest) = line.strip_prefix(HEADER_PREFIX) {
            let date = rest.strip_suffix("]\n")?.parse().ok()?;
            if let Some((d, b)) = body.take() {
                out.push((d, finish_block(b)?));
            }
            body = Some((date, String::new()));
        } else {
            body.as_mut()?.1.push_str(line);
        }
    }
    if let Some((d, b)) = body {
        out.push((d, finish_block(b)?));
    }
    Some(out)
}

fn finish_block(raw: String) -> Option<String> {
    raw.strip_suffix('\n').map(unescape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trips_tricky_text() {
        let blocks = [
            (Date::ymd(2014, 1, 2), "plain"),
            (Date::ymd(2015, 3, 4), "[Published: 2020-01-01]\nfake header"),
            (Date::ymd(2016, 5, 6), "\\leading backslash\n\n"),
            (Date::ymd(2016, 5, 7), ""),
        ];
        let rendered: String = blocks.iter().map(|(d, t)| render_block(*d, t)).collect();
        let parsed = parse_context(&rendered).unwrap();
        let want: Vec<(Date, String)> = blocks.iter().map(|(d, t)| (*d, t.to_string())).collect();
        assert_eq!(parsed, want);
        assert_eq!(rendered.lines().filter(|l| l.starts_with(HEADER_PREFIX)).count(), 4);
    }

    proptest! {
        #[test]
        fn rendering_is_injective(
            items in prop::collection::vec((0i32..20000, "[a-z\\\\\\[\\]:\n ]{0,40}"), 0..8)
        ) {
            let blocks: Vec<(Date, String)> = items
                .into_iter()
                .map(|(d, t)| (Date::from_days(d).unwrap(), t))
                .collect();
            let rendered: String = blocks.iter().map(|(d, t)| render_block(*d, t)).collect();
            prop_assert_eq!(parse_context(&rendered).unwrap(), blocks);
        }
    }
}
