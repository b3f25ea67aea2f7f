//! Okapi BM25 over an in-memory inverted index.

use std::collections::HashMap;

use crate::tokenize::terms;
use crate::vector_index::{rank_order, ScoredHit};
use crate::ChunkId;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    /// term -> (chunk, term frequency), chunks ascending
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    avgdl: f64,
}

impl Bm25Index {
    /// Documents are numbered in iteration order, matching chunk ids.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::new();
        for (i, text) in texts.into_iter().enumerate() {
            let ts = terms(text);
            doc_len.push(ts.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in ts {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = if doc_len.is_empty() {
            0.0
        } else {
            total as f64 / doc_len.len() as f64
        };
        Bm25Index {
            postings,
            doc_len,
            avgdl,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_len.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, which stays positive for terms
    /// in more than half the corpus.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        let total = self.doc_count() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// Scores of every chunk sharing at least one term with `query`.
    /// Repeated query terms count once.
    pub fn scores(&self, query: &str) -> Vec<ScoredHit> {
        let mut q = terms(query);
        q.sort();
        q.dedup();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for t in &q {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = 1.0 - BM25_B + BM25_B * f64::from(self.doc_len[doc as usize]) / self.avgdl;
                *acc.entry(doc).or_default() += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        acc.into_iter()
            .map(|(doc, s)| ScoredHit {
                chunk_id: ChunkId(doc),
                score: s as f32,
            })
            .collect()
    }

    pub fn top_k(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        let mut hits = self.scores(query);
        hits.sort_by(rank_order);
        hits.truncate(k);
        hits
    }
}
