//! Corpus ingestion: chunking, annotation, embedding and index assembly.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotation::{
    chunk_pass_two, doc_pass_one, head_tail, prompts, AnnotationCache, AnnotationConfig, AnnotationError,
    AnnotationSource, CacheKey, ChunkAnnotation, DocPassResult,
};
use crate::interval_index::{IntervalEntry, IntervalIndex, IntervalIndexError};
use crate::providers::{embed_texts, EmbeddingProvider, ProviderError, Providers};
use crate::retrieval::bm25::Bm25Index;
use crate::temporal::{Date, TimeInterval};
use crate::tokenize::TokenizerConfig;
use crate::vector_index::{VectorIndex, VectorIndexError};
use crate::ChunkId;

pub mod chunk;
mod format;

pub use chunk::{chunk_document, TextChunk, DEFAULT_MAX_CHUNK_TOKENS, MIN_CHUNK_TOKENS};
pub use format::{FORMAT_MAGIC, FORMAT_VERSION};

/// Metadata keys consulted, in order, for a publication-date hint.
pub const DATE_HINT_KEYS: &[&str] = &["date_hint", "date", "published", "pub_date"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("every document was rejected ({rejected} of them); nothing to index")]
    EmptyCorpus { rejected: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Vector(#[from] VectorIndexError),
    #[error(transparent)]
    Interval(#[from] IntervalIndexError),
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    #[serde(alias = "id")]
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn date_hint(&self) -> Option<&str> {
        DATE_HINT_KEYS
            .iter()
            .find_map(|k| self.metadata.get(*k).and_then(Value::as_str))
    }
}

/// Read a JSON-lines corpus. Blank lines are skipped.
pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Document>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut docs = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub chunk_id: ChunkId,
    pub doc_id: String,
    pub seq: u32,
    pub text: String,
    pub token_count: usize,
    pub event_intervals: Vec<TimeInterval>,
    pub pub_time_est: Date,
    pub interval_source: AnnotationSource,
    pub pub_source: AnnotationSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub max_chunk_tokens: usize,
    pub tokenizer: TokenizerConfig,
    pub annotation: AnnotationConfig,
    /// Texts per embedding request.
    pub embed_batch: usize,
    /// Recorded in the manifest; fix it to make index files byte-identical
    /// across builds.
    pub build_timestamp: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            max_chunk_tokens: DEFAULT_MAX_CHUNK_TOKENS,
            tokenizer: TokenizerConfig::default(),
            annotation: AnnotationConfig::default(),
            embed_batch: 64,
            build_timestamp: None,
        }
    }
}

/// Everything that affects retrieval results, stored with the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub embedder_id: String,
    pub dim: usize,
    pub llm_id: String,
    pub prompt_version: String,
    pub build_timestamp: String,
    pub corpus_bounds: TimeInterval,
    pub max_chunk_tokens: usize,
    pub tokenizer: TokenizerConfig,
    pub annotation: AnnotationConfig,
    pub doc_count: usize,
    pub chunk_count: usize,
}

impl Manifest {
    /// Manifest for chunks built outside [`build_corpus_index`]; bounds and
    /// counts are filled in by [`CorpusIndex::assemble`].
    pub fn new(embedder_id: impl Into<String>, dim: usize, llm_id: impl Into<String>, cfg: &IngestConfig) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            embedder_id: embedder_id.into(),
            dim,
            llm_id: llm_id.into(),
            prompt_version: prompts::PROMPT_VERSION.to_string(),
            build_timestamp: cfg.build_timestamp.clone().unwrap_or_else(now_rfc3339),
            corpus_bounds: TimeInterval::year(1970).expect("valid year"),
            max_chunk_tokens: cfg.max_chunk_tokens,
            tokenizer: cfg.tokenizer,
            annotation: cfg.annotation,
            doc_count: 0,
            chunk_count: 0,
        }
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Chunk table plus the interval and vector indexes over it. Chunk ids are
/// dense: chunk `i` sits at position `i` of the table and in row `i` of the
/// vector index.
#[derive(Debug)]
pub struct CorpusIndex {
    manifest: Manifest,
    chunks: Vec<ChunkRecord>,
    intervals: IntervalIndex,
    vectors: VectorIndex,
    bm25: OnceLock<Bm25Index>,
}

impl CorpusIndex {
    /// Build both indexes over `chunks`, whose ids must be `0..n` in order,
    /// with one embedding per chunk. Corpus bounds are recomputed from the
    /// chunks' publication estimates.
    pub fn assemble(
        mut manifest: Manifest,
        chunks: Vec<ChunkRecord>,
        embeddings: Vec<Vec<f32>>,
    ) -> Result<Self, IngestError> {
        if chunks.is_empty() {
            return Err(IngestError::EmptyCorpus { rejected: 0 });
        }
        if embeddings.len() != chunks.len() {
            return Err(IngestError::CorruptIndex(format!(
                "{} embeddings for {} chunks",
                embeddings.len(),
                chunks.len()
            )));
        }
        for (i, c) in chunks.iter().enumerate() {
            if c.chunk_id.index() != i {
                return Err(IngestError::CorruptIndex(format!("chunk at position {i} has id {}", c.chunk_id)));
            }
            if c.event_intervals.is_empty() {
                return Err(IngestError::CorruptIndex(format!("chunk {i} has no event intervals")));
            }
        }
        let bounds = corpus_bounds(&chunks);
        let entries: Vec<IntervalEntry> = chunks
            .iter()
            .flat_map(|c| c.event_intervals.iter().map(|iv| IntervalEntry::new(*iv, c.chunk_id)))
            .collect();
        let intervals = IntervalIndex::build(entries, bounds)?;
        let vectors = VectorIndex::build(manifest.dim, chunks.iter().map(|c| c.chunk_id).zip(embeddings))?;
        manifest.corpus_bounds = bounds;
        manifest.chunk_count = chunks.len();
        manifest.doc_count = {
            let mut ids: Vec<&str> = chunks.iter().map(|c| c.doc_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        };
        Ok(CorpusIndex {
            manifest,
            chunks,
            intervals,
            vectors,
            bm25: OnceLock::new(),
        })
    }

    pub(crate) fn from_parts(
        manifest: Manifest,
        chunks: Vec<ChunkRecord>,
        intervals: IntervalIndex,
        vectors: VectorIndex,
    ) -> Self {
        CorpusIndex {
            manifest,
            chunks,
            intervals,
            vectors,
            bm25: OnceLock::new(),
        }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn chunks(&self) -> &[ChunkRecord] {
        &self.chunks
    }

    pub fn chunk(&self, id: ChunkId) -> Option<&ChunkRecord> {
        self.chunks.get(id.index())
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn interval_index(&self) -> &IntervalIndex {
        &self.intervals
    }

    pub fn vector_index(&self) -> &VectorIndex {
        &self.vectors
    }

    pub fn embedding(&self, id: ChunkId) -> Option<&[f32]> {
        self.vectors.vector(id)
    }

    pub fn corpus_bounds(&self) -> TimeInterval {
        self.manifest.corpus_bounds
    }

    /// Lexical index, built on first use.
    pub fn bm25(&self) -> &Bm25Index {
        self.bm25
            .get_or_init(|| Bm25Index::build(self.chunks.iter().map(|c| c.text.as_str())))
    }

    /// A warning when `embedder` is not the one the index was built with.
    /// Queries still run; scores are just not meaningful.
    pub fn check_embedder(&self, embedder: &dyn EmbeddingProvider) -> Option<String> {
        let id = embedder.id();
        (id != self.manifest.embedder_id).then(|| {
            format!(
                "query embedder {id:?} differs from the index embedder {:?}",
                self.manifest.embedder_id
            )
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let path = path.as_ref();
        std::fs::write(path, format::encode(self)).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        format::decode(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IngestError> {
        format::decode(bytes)
    }
}

/// `[earliest publication, latest publication + 1 day)`.
fn corpus_bounds(chunks: &[ChunkRecord]) -> TimeInterval {
    let lo = chunks.iter().map(|c| c.pub_time_est).min().expect("non-empty");
    let hi = chunks.iter().map(|c| c.pub_time_est).max().expect("non-empty");
    let end = hi.add_days(1).expect("date in range");
    TimeInterval::new(lo, end).expect("non-empty bounds")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocReport {
    pub doc_id: String,
    pub pub_time_est: Option<Date>,
    pub pub_source: Option<AnnotationSource>,
    pub chunk_count: usize,
    pub rejection: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub docs: Vec<DocReport>,
    pub chunk_count: usize,
    /// Chunks per interval source (`llm`, `rule`, `fallback_pub`).
    pub interval_sources: BTreeMap<String, usize>,
    pub cache_hits: usize,
}

impl BuildReport {
    pub fn rejected(&self) -> impl Iterator<Item = &DocReport> {
        self.docs.iter().filter(|d| d.rejection.is_some())
    }

    pub fn accepted(&self) -> impl Iterator<Item = &DocReport> {
        self.docs.iter().filter(|d| d.rejection.is_none())
    }
}

struct DocWork {
    report: DocReport,
    pass_one: Option<DocPassResult>,
    chunks: Vec<(TextChunk, ChunkAnnotation)>,
    cache_hits: usize,
}

fn source_name(s: AnnotationSource) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Stage keys cover everything that changes the stage's output, so a
/// config change never serves a stale entry.
fn stage_key<T: Serialize>(stage: &str, inputs: &T, model_id: &str) -> CacheKey {
    let content = serde_json::to_string(inputs).expect("serializable cache inputs");
    CacheKey::new(stage, &content, prompts::PROMPT_VERSION, model_id)
}

fn process_document(
    doc: &Document,
    providers: &Providers,
    cfg: &IngestConfig,
    cache: &AnnotationCache,
) -> Result<DocWork, ProviderError> {
    let mut report = DocReport {
        doc_id: doc.doc_id.clone(),
        pub_time_est: None,
        pub_source: None,
        chunk_count: 0,
        rejection: None,
    };
    let reject = |mut report: DocReport, reason: String| {
        warn!("rejecting document {:?}: {reason}", report.doc_id);
        report.rejection = Some(reason);
        DocWork {
            report,
            pass_one: None,
            chunks: Vec::new(),
            cache_hits: 0,
        }
    };
    if doc.text.trim().is_empty() {
        return Ok(reject(report, "empty text".into()));
    }
    let llm = providers.llm.as_ref();
    let llm_id = llm.id();
    let mut cache_hits = 0;

    let (head, tail) = head_tail(&doc.text, cfg.annotation.head_tail_chars);
    let hint = doc.date_hint();
    let key = stage_key("doc_pass", &(head, tail, hint, &cfg.annotation), &llm_id);
    let pass_one: Result<DocPassResult, String> = match cache.get::<Result<DocPassResult, String>>(&key) {
        Some(hit) => {
            cache_hits += 1;
            hit
        }
        None => {
            let r = match doc_pass_one(llm, head, tail, hint, &cfg.annotation) {
                Ok(r) => Ok(r),
                Err(AnnotationError::Provider(e)) => return Err(e),
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = cache.put(key, &r) {
                warn!("annotation cache write failed: {e}");
            }
            r
        }
    };
    let pass_one = match pass_one {
        Ok(p) => p,
        Err(reason) => return Ok(reject(report, reason)),
    };
    report.pub_time_est = Some(pass_one.pub_time_est);
    report.pub_source = Some(pass_one.source);

    let texts = chunk_document(&doc.text, cfg.max_chunk_tokens, &cfg.tokenizer);
    let annotated: Vec<(TextChunk, ChunkAnnotation, bool)> = texts
        .into_par_iter()
        .map(|c| {
            let key = stage_key("chunk_pass", &(&c.text, &pass_one, &cfg.annotation), &llm_id);
            if let Some(hit) = cache.get::<ChunkAnnotation>(&key) {
                return Ok((c, hit, true));
            }
            let a = chunk_pass_two(llm, &c.text, &pass_one, &cfg.annotation)?;
            if let Err(e) = cache.put(key, &a) {
                warn!("annotation cache write failed: {e}");
            }
            Ok((c, a, false))
        })
        .collect::<Result<_, ProviderError>>()?;
    cache_hits += annotated.iter().filter(|(_, _, hit)| *hit).count();
    report.chunk_count = annotated.len();
    Ok(DocWork {
        report,
        pass_one: Some(pass_one),
        chunks: annotated.into_iter().map(|(c, a, _)| (c, a)).collect(),
        cache_hits,
    })
}

fn embed_all(
    embedder: &dyn EmbeddingProvider,
    texts: &[&str],
    batch: usize,
    cache: &AnnotationCache,
) -> Result<(Vec<Vec<f32>>, usize), ProviderError> {
    let embedder_id = embedder.id();
    let keys: Vec<CacheKey> = texts
        .iter()
        .map(|t| CacheKey::new("embed", t, "-", &embedder_id))
        .collect();
    let mut out: Vec<Option<Vec<f32>>> = keys.iter().map(|k| cache.get(k)).collect();
    let hits = out.iter().filter(|v| v.is_some()).count();
    let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
    let fresh: Vec<Vec<Vec<f32>>> = missing
        .par_chunks(batch.max(1))
        .map(|idx| {
            let batch: Vec<&str> = idx.iter().map(|&i| texts[i]).collect();
            embed_texts(embedder, &batch)
        })
        .collect::<Result<_, _>>()?;
    for (&i, v) in missing.iter().zip(fresh.into_iter().flatten()) {
        if cache.path().is_some() {
            if let Err(e) = cache.put(keys[i].clone(), &v) {
                warn!("embedding cache write failed: {e}");
            }
        }
        out[i] = Some(v);
    }
    Ok((out.into_iter().map(|v| v.expect("every text embedded")).collect(), hits))
}

/// Annotate, chunk and embed `docs` and build the corpus index.
///
/// Documents are processed concurrently; ids are assigned afterwards in
/// input order, so the result does not depend on scheduling. Finished work
/// is written to `cache` as it completes, which makes a build interrupted
/// by a provider outage resumable.
pub fn build_corpus_index(
    docs: &[Document],
    providers: &Providers,
    cfg: &IngestConfig,
    cache: Option<&AnnotationCache>,
) -> Result<(CorpusIndex, BuildReport), IngestError> {
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(IngestError::DuplicateDocId(d.doc_id.clone()));
        }
    }
    let scratch;
    let cache = match cache {
        Some(c) => c,
        None => {
            scratch = AnnotationCache::in_memory();
            &scratch
        }
    };
    let work: Vec<DocWork> = docs
        .par_iter()
        .map(|d| process_document(d, providers, cfg, cache))
        .collect::<Result<_, _>>()?;

    let mut report = BuildReport::default();
    let mut records = Vec::new();
    for w in work {
        report.cache_hits += w.cache_hits;
        if let Some(p) = &w.pass_one {
            for (c, a) in w.chunks {
                *report.interval_sources.entry(source_name(a.source)).or_default() += 1;
                records.push(ChunkRecord {
                    chunk_id: ChunkId(records.len() as u32),
                    doc_id: w.report.doc_id.clone(),
                    seq: c.seq,
                    text: c.text,
                    token_count: c.token_count,
                    event_intervals: a.event_intervals,
                    pub_time_est: p.pub_time_est,
                    interval_source: a.source,
                    pub_source: p.source,
                });
            }
        }
        report.docs.push(w.report);
    }
    report.chunk_count = records.len();
    if records.is_empty() {
        return Err(IngestError::EmptyCorpus {
            rejected: report.rejected().count(),
        });
    }
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let (embeddings, hits) = embed_all(providers.embedder.as_ref(), &texts, cfg.embed_batch, cache)?;
    report.cache_hits += hits;
    let manifest = Manifest::new(providers.embedder.id(), providers.embedder.dim(), providers.llm.id(), cfg);
    let index = CorpusIndex::assemble(manifest, records, embeddings)?;
    info!(
        "indexed {} chunks from {} documents ({} rejected)",
        index.len(),
        index.manifest().doc_count,
        report.rejected().count()
    );
    Ok((index, report))
}
