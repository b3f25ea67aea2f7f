//! Exact flat cosine search.
//!
//! Rows are L2-normalized on insert so cosine similarity is a plain dot
//! product. Results are ordered by score descending with ties broken by
//! ascending chunk id.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ChunkId;

/// Maximum tolerated deviation of a stored row's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f32 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum VectorIndexError {
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown chunk id {0}")]
    UnknownChunkId(ChunkId),
    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(ChunkId),
    #[error("vector for chunk {0} has zero or non-finite norm")]
    DegenerateVector(ChunkId),
    #[error("dimension must be positive")]
    ZeroDimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub chunk_id: ChunkId,
    pub score: f32,
}

/// Descending score, then ascending id.
pub fn rank_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

// Heap entry ordered so the *worst* hit sits on top of a max-heap.
struct Worst(ScoredHit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// Sequential f32 dot product.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// L2-normalize in place; returns false for a zero or non-finite norm.
pub fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<ChunkId>,
    rows: HashMap<ChunkId, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Result<Self, VectorIndexError> {
        if dim == 0 {
            return Err(VectorIndexError::ZeroDimension);
        }
        Ok(VectorIndex {
            dim,
            data: Vec::new(),
            ids: Vec::new(),
            rows: HashMap::new(),
        })
    }

    pub fn build(
        dim: usize,
        rows: impl IntoIterator<Item = (ChunkId, Vec<f32>)>,
    ) -> Result<Self, VectorIndexError> {
        let mut index = VectorIndex::new(dim)?;
        for (id, v) in rows {
            index.insert(id, v)?;
        }
        Ok(index)
    }

    /// Rebuild from stored rows without renormalizing, so scores after a
    /// save/load round trip are bit-identical. Rows must already be unit
    /// norm.
    pub fn from_raw(dim: usize, ids: Vec<ChunkId>, data: Vec<f32>) -> Result<Self, VectorIndexError> {
        if dim == 0 {
            return Err(VectorIndexError::ZeroDimension);
        }
        if data.len() != ids.len() * dim {
            return Err(VectorIndexError::DimensionMismatch {
                expected: ids.len() * dim,
                actual: data.len(),
            });
        }
        let mut rows = HashMap::with_capacity(ids.len());
        for (r, (&id, row)) in ids.iter().zip(data.chunks_exact(dim)).enumerate() {
            if rows.insert(id, r).is_some() {
                return Err(VectorIndexError::DuplicateChunkId(id));
            }
            let norm = row.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > f64::from(UNIT_NORM_TOLERANCE) {
                return Err(VectorIndexError::DegenerateVector(id));
            }
        }
        Ok(VectorIndex { dim, data, ids, rows })
    }

    /// Append a row, normalizing it.
    pub fn insert(&mut self, id: ChunkId, mut v: Vec<f32>) -> Result<(), VectorIndexError> {
        if v.len() != self.dim {
            return Err(VectorIndexError::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if self.rows.contains_key(&id) {
            return Err(VectorIndexError::DuplicateChunkId(id));
        }
        if !normalize(&mut v) {
            return Err(VectorIndexError::DegenerateVector(id));
        }
        self.rows.insert(id, self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Chunk ids in row order.
    pub fn ids(&self) -> &[ChunkId] {
        &self.ids
    }

    /// Row-major normalized vectors.
    pub fn raw_data(&self) -> &[f32] {
        &self.data
    }

    pub fn contains(&self, id: ChunkId) -> bool {
        self.rows.contains_key(&id)
    }

    pub fn vector(&self, id: ChunkId) -> Option<&[f32]> {
        self.rows.get(&id).map(|&r| self.row(r))
    }

    fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Exact top-k by cosine. `candidates = None` searches every row.
    pub fn top_k(
        &self,
        query: &[f32],
        candidates: Option<&[ChunkId]>,
        k: usize,
    ) -> Result<Vec<ScoredHit>, VectorIndexError> {
        if query.len() != self.dim {
            return Err(VectorIndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
        let mut offer = |hit: ScoredHit| {
            if heap.len() < k {
                heap.push(Worst(hit));
            } else if let Some(top) = heap.peek() {
                if rank_order(&hit, &top.0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(hit));
                }
            }
        };
        match candidates {
            Some(ids) => {
                let owned;
                let ids = if ids.windows(2).all(|w| w[0] < w[1]) {
                    ids
                } else {
                    let mut v = ids.to_vec();
                    v.sort_unstable();
                    v.dedup();
                    owned = v;
                    &owned[..]
                };
                let rows = ids
                    .iter()
                    .map(|id| {
                        self.rows
                            .get(id)
                            .copied()
                            .ok_or(VectorIndexError::UnknownChunkId(*id))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                for (id, r) in ids.iter().zip(rows) {
                    offer(ScoredHit {
                        chunk_id: *id,
                        score: dot(query, self.row(r)),
                    });
                }
            }
            None => {
                for (r, id) in self.ids.iter().enumerate() {
                    offer(ScoredHit {
                        chunk_id: *id,
                        score: dot(query, self.row(r)),
                    });
                }
            }
        }
        let mut hits: Vec<ScoredHit> = heap.into_iter().map(|w| w.0).collect();
        hits.sort_by(rank_order);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(normalize(&mut v));
        v
    }

    fn oracle(index: &VectorIndex, q: &[f32], cands: Option<&[ChunkId]>, k: usize) -> Vec<ScoredHit> {
        let ids: Vec<ChunkId> = match cands {
            Some(c) => c.to_vec(),
            None => index.ids().to_vec(),
        };
        let mut all: Vec<ScoredHit> = ids
            .iter()
            .map(|id| {
                let v = index.vector(*id).unwrap();
                let mut s = 0.0f32;
                for i in 0..v.len() {
                    s += q[i] * v[i];
                }
                ScoredHit { chunk_id: *id, score: s }
            })
            .collect();
        all.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then(a.chunk_id.cmp(&b.chunk_id))
        });
        all.truncate(k);
        all
    }

    #[test]
    fn self_similarity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_unit(&mut rng, 16);
        let b = random_unit(&mut rng, 16);
        let idx = VectorIndex::build(16, [(ChunkId(0), a.clone()), (ChunkId(1), b)]).unwrap();
        let hits = idx.top_k(&a, Some(&[ChunkId(0), ChunkId(1)]), 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk_id, ChunkId(0));
        assert!((hits[0].score - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn empty_candidates_give_empty_result() {
        let idx = VectorIndex::build(2, [(ChunkId(0), vec![1.0, 0.0])]).unwrap();
        assert!(idx.top_k(&[1.0, 0.0], Some(&[]), 5).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let idx = VectorIndex::build(2, [(ChunkId(0), vec![3.0, 4.0])]).unwrap();
        assert_eq!(
            idx.top_k(&[1.0], None, 1),
            Err(VectorIndexError::DimensionMismatch { expected: 2, actual: 1 })
        );
        assert_eq!(
            idx.top_k(&[1.0, 0.0], Some(&[ChunkId(9)]), 1),
            Err(VectorIndexError::UnknownChunkId(ChunkId(9)))
        );
        let mut idx = idx;
        assert_eq!(
            idx.insert(ChunkId(1), vec![0.0, 0.0]),
            Err(VectorIndexError::DegenerateVector(ChunkId(1)))
        );
        assert_eq!(
            idx.insert(ChunkId(0), vec![1.0, 0.0]),
            Err(VectorIndexError::DuplicateChunkId(ChunkId(0)))
        );
    }

    #[test]
    fn rows_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<_> = (0..50)
            .map(|i| {
                let v: Vec<f32> = (0..64).map(|_| rng.gen_range(-10.0..10.0)).collect();
                (ChunkId(i), v)
            })
            .collect();
        let idx = VectorIndex::build(64, rows).unwrap();
        for id in idx.ids() {
            let n: f32 = idx.vector(*id).unwrap().iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        }
    }

    #[test]
    fn matches_full_sort_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 32;
        let mut rows: Vec<(ChunkId, Vec<f32>)> = Vec::new();
        for i in 0..500u32 {
            let v = if i % 7 == 3 && i > 10 {
                // duplicate of an earlier row: exact score ties
                rows[(i as usize) / 3].1.clone()
            } else {
                random_unit(&mut rng, dim)
            };
            rows.push((ChunkId(i), v));
        }
        let idx = VectorIndex::build(dim, rows).unwrap();
        for _ in 0..100 {
            let q = random_unit(&mut rng, dim);
            assert_eq!(idx.top_k(&q, None, 20).unwrap(), oracle(&idx, &q, None, 20));
            let cands: Vec<ChunkId> = idx.ids().iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
            let got = idx.top_k(&q, Some(&cands), 20).unwrap();
            assert_eq!(got, oracle(&idx, &q, Some(&cands), 20));
            assert!(got.iter().all(|h| cands.contains(&h.chunk_id)));
        }
    }

    #[test]
    fn smaller_k_is_a_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<_> = (0..200).map(|i| (ChunkId(i), random_unit(&mut rng, 8))).collect();
        let idx = VectorIndex::build(8, rows).unwrap();
        let q = random_unit(&mut rng, 8);
        let big = idx.top_k(&q, None, 50).unwrap();
        for k in [1, 5, 17, 49] {
            assert_eq!(idx.top_k(&q, None, k).unwrap(), big[..k].to_vec());
        }
    }
}
