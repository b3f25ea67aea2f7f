//! Temporally-aware retrieval for diachronic question answering.
//!
//! The pipeline annotates every chunk of a corpus with the calendar
//! intervals of the events it describes, splits a question into a
//! temporally neutral core and a set of time constraints, filters chunks
//! whose event intervals overlap the constraints with a static interval
//! tree, and ranks the survivors against an embedding averaged over
//! time-anchored rewrites of the core query. Retrieved chunks are handed to
//! the generator in publication order.
//!
//! Crate layout:
//!
//! - [`temporal`]: dates, half-open intervals, constraint resolution,
//!   anchor sampling.
//! - [`interval_index`] / [`vector_index`]: the two retrieval structures.
//! - [`providers`]: embedding and LLM abstractions with HTTP clients and
//!   deterministic offline stubs.
//! - [`annotation`]: document/chunk time extraction and question
//!   decomposition.
//! - [`ingest`]: chunking, index construction and the on-disk format.
//! - [`retrieval`]: TA-RAG, naive dense and BM25 retrieval plus coverage
//!   diagnostics.
//! - [`context`]: chronological context assembly.
//! - [`eval`]: MCQA evaluation harness.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod annotation;
pub mod config;
pub mod context;
pub mod eval;
pub mod ingest;
pub mod interval_index;
pub mod providers;
pub mod retrieval;
pub mod temporal;
pub mod tokenize;
pub mod vector_index;

pub use temporal::{Date, Granularity, TemporalConstraint, TimeInterval};

/// Dense chunk identifier, assigned in corpus order at index build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub u32);

impl ChunkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
