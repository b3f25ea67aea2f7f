//! Static augmented interval tree over chunk event intervals.
//!
//! Entries are sorted by `(start, end, id)` and laid out as an implicit
//! balanced binary tree over the sorted array: the node for a sub-range
//! `[lo, hi)` is its midpoint. Each node carries the maximum end of its
//! subtree, which lets a query skip whole subtrees that finish before the
//! query starts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::temporal::{Date, TemporalError, TimeInterval};
use crate::ChunkId;

#[derive(Debug, Error)]
pub enum IntervalIndexError {
    #[error("cannot build an interval index over an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

/// One `(interval, chunk)` pair. A chunk appears once per event interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntervalEntry {
    pub start: i32,
    pub end: i32,
    pub chunk: ChunkId,
}

impl IntervalEntry {
    pub fn new(interval: TimeInterval, chunk: ChunkId) -> Self {
        IntervalEntry {
            start: interval.start_days(),
            end: interval.end_days(),
            chunk,
        }
    }

    pub fn interval(&self) -> TimeInterval {
        TimeInterval::from_days(self.start, self.end).expect("entries hold valid intervals")
    }
}

#[derive(Debug, Clone)]
pub struct IntervalIndex {
    entries: Vec<IntervalEntry>,
    /// `max_end[i]`: largest end in the subtree rooted at sorted position `i`.
    max_end: Vec<i32>,
    corpus_bounds: TimeInterval,
    id_bound: usize,
}

impl IntervalIndex {
    /// Build over raw `(interval, chunk)` entries. `corpus_bounds` is the
    /// timeline unbounded constraints clamp to; it is supplied by the caller
    /// because it derives from publication dates, not event intervals.
    pub fn build(
        mut entries: Vec<IntervalEntry>,
        corpus_bounds: TimeInterval,
    ) -> Result<Self, IntervalIndexError> {
        if entries.is_empty() {
            return Err(IntervalIndexError::EmptyCorpus);
        }
        for e in &entries {
            if e.start >= e.end {
                return Err(TemporalError::InvalidInterval {
                    start: Date::from_days(e.start)?,
                    end: Date::from_days(e.end)?,
                }
                .into());
            }
        }
        entries.sort_unstable();
        let mut max_end = vec![i32::MIN; entries.len()];
        annotate(&entries, &mut max_end, 0, entries.len());
        let id_bound = entries.iter().map(|e| e.chunk.index() + 1).max().unwrap_or(0);
        Ok(IntervalIndex {
            entries,
            max_end,
            corpus_bounds,
            id_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn corpus_bounds(&self) -> TimeInterval {
        self.corpus_bounds
    }

    /// Entries in sorted order.
    pub fn entries(&self) -> &[IntervalEntry] {
        &self.entries
    }

    /// Chunk ids with any event interval overlapping any query interval,
    /// sorted ascending and deduplicated.
    pub fn query_overlapping(&self, query_intervals: &[TimeInterval]) -> Vec<ChunkId> {
        let mut visited = vec![0u64; self.id_bound.div_ceil(64)];
        let mut out = Vec::new();
        for q in query_intervals {
            self.visit(0, self.entries.len(), q.start_days(), q.end_days(), &mut |id| {
                let (word, bit) = (id.index() / 64, id.index() % 64);
                if visited[word] & (1 << bit) == 0 {
                    visited[word] |= 1 << bit;
                    out.push(id);
                }
            });
        }
        out.sort_unstable();
        out
    }

    fn visit(&self, lo: usize, hi: usize, qs: i32, qe: i32, emit: &mut impl FnMut(ChunkId)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        if self.max_end[mid] <= qs {
            return;
        }
        self.visit(lo, mid, qs, qe, emit);
        let e = &self.entries[mid];
        if e.start < qe {
            if qs < e.end {
                emit(e.chunk);
            }
            self.visit(mid + 1, hi, qs, qe, emit);
        }
    }
}

fn annotate(entries: &[IntervalEntry], max_end: &mut [i32], lo: usize, hi: usize) -> i32 {
    if lo >= hi {
        return i32::MIN;
    }
    let mid = lo + (hi - lo) / 2;
    let left = annotate(entries, max_end, lo, mid);
    let right = annotate(entries, max_end, mid + 1, hi);
    let m = entries[mid].end.max(left).max(right);
    max_end[mid] = m;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::overlaps;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn iv(a: (i32, u32, u32), b: (i32, u32, u32)) -> TimeInterval {
        TimeInterval::new(Date::ymd(a.0, a.1, a.2), Date::ymd(b.0, b.1, b.2)).unwrap()
    }

    fn bounds() -> TimeInterval {
        iv((2000, 1, 1), (2030, 1, 1))
    }

    fn linear_scan(entries: &[IntervalEntry], qs: &[TimeInterval]) -> Vec<ChunkId> {
        let set: BTreeSet<ChunkId> = entries
            .iter()
            .filter(|e| qs.iter().any(|q| overlaps(&e.interval(), q)))
            .map(|e| e.chunk)
            .collect();
        set.into_iter().collect()
    }

    #[test]
    fn counts_entries_per_event() {
        let entries: Vec<_> = (0..3)
            .map(|i| IntervalEntry::new(TimeInterval::year(2015 + i).unwrap(), ChunkId(i as u32)))
            .collect();
        assert_eq!(IntervalIndex::build(entries, bounds()).unwrap().len(), 3);

        let multi = vec![
            IntervalEntry::new(TimeInterval::year(2015).unwrap(), ChunkId(0)),
            IntervalEntry::new(TimeInterval::year(2018).unwrap(), ChunkId(0)),
        ];
        let idx = IntervalIndex::build(multi, bounds()).unwrap();
        assert_eq!(idx.len(), 2);
        assert!(idx.entries().iter().all(|e| e.chunk == ChunkId(0)));
        assert_eq!(
            idx.query_overlapping(&[iv((2015, 1, 1), (2019, 1, 1))]),
            vec![ChunkId(0)]
        );
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            IntervalIndex::build(vec![], bounds()),
            Err(IntervalIndexError::EmptyCorpus)
        ));
    }

    #[test]
    fn direct_overlap_example() {
        let idx = IntervalIndex::build(
            vec![
                IntervalEntry::new(iv((2015, 6, 1), (2015, 7, 1)), ChunkId(0)),
                IntervalEntry::new(iv((2017, 1, 1), (2018, 1, 1)), ChunkId(1)),
            ],
            bounds(),
        )
        .unwrap();
        assert_eq!(
            idx.query_overlapping(&[TimeInterval::year(2015).unwrap()]),
            vec![ChunkId(0)]
        );
        assert_eq!(
            idx.query_overlapping(&[idx.corpus_bounds()]),
            vec![ChunkId(0), ChunkId(1)]
        );
        assert!(idx.query_overlapping(&[]).is_empty());
    }

    #[test]
    fn agrees_with_linear_scan_on_random_corpora() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..60 {
            let n = rng.gen_range(1..3_000);
            let entries: Vec<IntervalEntry> = (0..n)
                .map(|_| {
                    let s = rng.gen_range(10_000..12_000);
                    let len = if rng.gen_bool(0.3) { 1 } else { rng.gen_range(1..400) };
                    IntervalEntry {
                        start: s,
                        end: s + len,
                        chunk: ChunkId(rng.gen_range(0..(n as u32 / 2 + 1))),
                    }
                })
                .collect();
            let idx = IntervalIndex::build(entries.clone(), bounds()).unwrap();
            for _ in 0..20 {
                let s = rng.gen_range(9_800..12_200);
                let q = TimeInterval::from_days(s, s + rng.gen_range(1..300)).unwrap();
                assert_eq!(
                    idx.query_overlapping(&[q]),
                    linear_scan(&entries, &[q]),
                    "trial {trial}"
                );
            }
        }
    }

    #[test]
    fn widening_a_query_never_shrinks_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries: Vec<IntervalEntry> = (0..500)
            .map(|i| {
                let s = rng.gen_range(0..1000);
                IntervalEntry {
                    start: s,
                    end: s + rng.gen_range(1..60),
                    chunk: ChunkId(i),
                }
            })
            .collect();
        let idx = IntervalIndex::build(entries, bounds()).unwrap();
        for _ in 0..200 {
            let s = rng.gen_range(0..1000);
            let e = s + rng.gen_range(1..100);
            let narrow: BTreeSet<_> = idx
                .query_overlapping(&[TimeInterval::from_days(s, e).unwrap()])
                .into_iter()
                .collect();
            let wide: BTreeSet<_> = idx
                .query_overlapping(&[TimeInterval::from_days(s - 10, e + 25).unwrap()])
                .into_iter()
                .collect();
            assert!(narrow.is_subset(&wide));
        }
    }

    #[test]
    fn build_order_is_unobservable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut entries: Vec<IntervalEntry> = (0..300)
            .map(|i| {
                let s = rng.gen_range(0..500);
                IntervalEntry {
                    start: s,
                    end: s + rng.gen_range(1..50),
                    chunk: ChunkId(i % 120),
                }
            })
            .collect();
        let a = IntervalIndex::build(entries.clone(), bounds()).unwrap();
        entries.reverse();
        let b = IntervalIndex::build(entries, bounds()).unwrap();
        let q = [TimeInterval::from_days(100, 250).unwrap()];
        assert_eq!(a.query_overlapping(&q), b.query_overlapping(&q));
        assert_eq!(a.entries(), b.entries());
    }
}
