//! Sentence-packing chunker.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tokenize::{split_sentences, TokenizerConfig};

pub const MIN_CHUNK_TOKENS: usize = 32;
pub const DEFAULT_MAX_CHUNK_TOKENS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextChunk {
    pub seq: u32,
    pub text: String,
    pub token_count: usize,
    /// Byte range in the source document.
    pub span: Range<usize>,
}

/// Greedily pack sentences into chunks of at most `max_tokens`.
///
/// Chunks are contiguous byte ranges of `text`, so their concatenation is
/// the document. A sentence longer than the budget is split at token piece
/// boundaries. Whitespace-only stretches ride along with the preceding
/// chunk. `max_tokens` below [`MIN_CHUNK_TOKENS`] is raised to it.
pub fn chunk_document(text: &str, max_tokens: usize, tok: &TokenizerConfig) -> Vec<TextChunk> {
    let max_tokens = max_tokens.max(MIN_CHUNK_TOKENS);
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut cur: Option<(Range<usize>, usize)> = None;
    for sentence in split_sentences(text) {
        let n = tok.count(&text[sentence.clone()]);
        match cur.as_mut() {
            Some((r, used)) if *used + n <= max_tokens => {
                r.end = sentence.end;
                *used += n;
                continue;
            }
            _ => {}
        }
        if n <= max_tokens {
            spans.extend(cur.take().map(|(r, _)| r));
            cur = Some((sentence, n));
            continue;
        }
        spans.extend(cur.take().map(|(r, _)| r));
        let pieces = tok.pieces(&text[sentence.clone()]);
        let mut part_start = sentence.start;
        for group in pieces.chunks(max_tokens).skip(1) {
            let cut = sentence.start + group[0].start;
            spans.push(part_start..cut);
            part_start = cut;
        }
        let tail = part_start..sentence.end;
        let tail_tokens = tok.count(&text[tail.clone()]);
        cur = Some((tail, tail_tokens));
    }
    spans.extend(cur.map(|(r, _)| r));
    if spans.is_empty() && !text.is_empty() {
        spans.push(0..text.len());
    }
    spans
        .into_iter()
        .enumerate()
        .map(|(i, span)| {
            let t = &text[span.clone()];
            TextChunk {
                seq: i as u32,
                text: t.to_string(),
                token_count: tok.count(t),
                span,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(n: usize, tag: &str) -> String {
        let mut s = (0..n - 1).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ");
        s.push('.');
        s
    }

    #[test]
    fn packs_two_fifty_token_sentences_per_chunk() {
        // 49 words + the period = 50 tokens per sentence
        let doc = (0..10).map(|i| words(50, &format!("s{i}w"))).collect::<Vec<_>>().join(" ");
        let tok = TokenizerConfig::default();
        let chunks = chunk_document(&doc, 120, &tok);
        assert_eq!(chunks.len(), 5);
        assert!(chunks.iter().all(|c| c.token_count == 100));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), doc);
    }

    #[test]
    fn hard_splits_an_oversized_sentence() {
        let doc = words(300, "w");
        let chunks = chunk_document(&doc, 120, &TokenizerConfig::default());
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.token_count <= 120));
        assert_eq!(chunks.iter().map(|c| c.token_count).sum::<usize>(), 300);
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), doc);
    }

    #[test]
    fn long_word_splits_inside_the_word() {
        let doc = "x".repeat(8 * 100);
        let chunks = chunk_document(&doc, 32, &TokenizerConfig::default());
        assert_eq!(chunks.len(), 4);
        assert!(chunks.iter().all(|c| c.token_count <= 32));
    }

    proptest! {
        #[test]
        fn reconstruction_and_budget(
            doc in "[a-zA-Z0-9 ,.!?\n'-]{1,3000}",
            max in 32usize..200,
            cps in 0usize..10,
        ) {
            let tok = TokenizerConfig { chars_per_subword: cps };
            let chunks = chunk_document(&doc, max, &tok);
            prop_assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), doc.clone());
            let mut pos = 0;
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.seq as usize, i);
                prop_assert_eq!(c.span.start, pos);
                pos = c.span.end;
                prop_assert!(c.token_count <= max);
                prop_assert_eq!(c.token_count, tok.count(&c.text));
            }
        }
    }
}
