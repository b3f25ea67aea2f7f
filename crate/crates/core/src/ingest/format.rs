//! Single-file index container.
//!
//! ```text
//! magic     8 bytes  "TARAGIDX"
//! version   u32 LE
//! sections  u32 LE   number of sections
//! section*  tag [4]u8, length u64 LE, payload
//! checksum  32 bytes SHA-256 of every preceding byte
//! ```
//!
//! Sections, in order:
//!
//! - `MANI`: manifest as JSON.
//! - `CHNK`: chunk table as JSON lines, in id order.
//! - `VECS`: `dim` u32, `count` u32, `count` chunk ids (u32), then
//!   `count * dim` f32, row-major. All little-endian.
//! - `IVLS`: `count` u64, then `count` entries of start day (i32), end day
//!   (i32) and chunk id (u32), days counted from 1970-01-01.

use sha2::{Digest, Sha256};

use super::{ChunkRecord, CorpusIndex, IngestError, Manifest};
use crate::interval_index::{IntervalEntry, IntervalIndex};
use crate::vector_index::VectorIndex;
use crate::ChunkId;

pub const FORMAT_MAGIC: &[u8; 8] = b"TARAGIDX";
pub const FORMAT_VERSION: u32 = 1;

const CHECKSUM_LEN: usize = 32;
const HEADER_LEN: usize = 16;

fn section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

pub(super) fn encode(index: &CorpusIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FORMAT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&4u32.to_le_bytes());

    let manifest = serde_json::to_vec(&index.manifest).expect("manifest serializes");
    section(&mut out, b"MANI", &manifest);

    let mut chunks = Vec::new();
    for c in &index.chunks {
        serde_json::to_writer(&mut chunks, c).expect("chunk serializes");
        chunks.push(b'\n');
    }
    section(&mut out, b"CHNK", &chunks);

    let v = &index.vectors;
    let mut vecs = Vec::with_capacity(8 + v.len() * (4 + 4 * v.dim()));
    vecs.extend_from_slice(&(v.dim() as u32).to_le_bytes());
    vecs.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for id in v.ids() {
        vecs.extend_from_slice(&id.0.to_le_bytes());
    }
    for x in v.raw_data() {
        vecs.extend_from_slice(&x.to_le_bytes());
    }
    section(&mut out, b"VECS", &vecs);

    let entries = index.intervals.entries();
    let mut ivls = Vec::with_capacity(8 + entries.len() * 12);
    ivls.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        ivls.extend_from_slice(&e.start.to_le_bytes());
        ivls.extend_from_slice(&e.end.to_le_bytes());
        ivls.extend_from_slice(&e.chunk.0.to_le_bytes());
    }
    section(&mut out, b"IVLS", &ivls);

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn corrupt(msg: impl Into<String>) -> IngestError {
    IngestError::CorruptIndex(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn i32(&mut self) -> Result<i32, IngestError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IngestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn section(&mut self, tag: &[u8; 4]) -> Result<&'a [u8], IngestError> {
        let found = self.take(4)?;
        if found != tag {
            return Err(corrupt(format!(
                "expected section {}, found {}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let len = usize::try_from(self.u64()?).map_err(|_| corrupt("section too large"))?;
        self.take(len)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<CorpusIndex, IngestError> {
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(corrupt("file too short"));
    }
    if &bytes[..8] != FORMAT_MAGIC {
        return Err(corrupt("not an index file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(IngestError::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { buf: body, pos: 12 };
    if r.u32()? != 4 {
        return Err(corrupt("unexpected section count"));
    }
    let manifest: Manifest =
        serde_json::from_slice(r.section(b"MANI")?).map_err(|e| corrupt(format!("manifest: {e}")))?;

    let mut chunks = Vec::with_capacity(manifest.chunk_count);
    for (i, line) in r.section(b"CHNK")?.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let c: ChunkRecord =
            serde_json::from_slice(line).map_err(|e| corrupt(format!("chunk line {}: {e}", i + 1)))?;
        if c.chunk_id.index() != chunks.len() {
            return Err(corrupt(format!("chunk ids are not dense at line {}", i + 1)));
        }
        chunks.push(c);
    }

    let mut v = Reader {
        buf: r.section(b"VECS")?,
        pos: 0,
    };
    let dim = v.u32()? as usize;
    let count = v.u32()? as usize;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(ChunkId(v.u32()?));
    }
    let raw = v.take(count.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(|| corrupt("vector block size"))?)?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    if !v.done() {
        return Err(corrupt("trailing bytes in vector block"));
    }
    let vectors = VectorIndex::from_raw(dim, ids, data).map_err(|e| corrupt(format!("vectors: {e}")))?;

    let mut iv = Reader {
        buf: r.section(b"IVLS")?,
        pos: 0,
    };
    let n = usize::try_from(iv.u64()?).map_err(|_| corrupt("interval count"))?;
    let mut entries = Vec::with_capacity(n.min(iv.buf.len() / 12));
    for _ in 0..n {
        entries.push(IntervalEntry {
            start: iv.i32()?,
            end: iv.i32()?,
            chunk: ChunkId(iv.u32()?),
        });
    }
    if !iv.done() || !r.done() {
        return Err(corrupt("trailing bytes"));
    }

    if manifest.dim != dim || chunks.len() != vectors.len() || chunks.len() != manifest.chunk_count {
        return Err(corrupt("section sizes disagree with the manifest"));
    }
    if vectors.ids().iter().enumerate().any(|(i, id)| id.index() != i) {
        return Err(corrupt("vector rows are not in chunk id order"));
    }
    if entries.iter().any(|e| e.chunk.index() >= chunks.len()) {
        return Err(corrupt("interval entry refers to an unknown chunk"));
    }
    let intervals =
        IntervalIndex::build(entries, manifest.corpus_bounds).map_err(|e| corrupt(format!("intervals: {e}")))?;
    Ok(CorpusIndex::from_parts(manifest, chunks, intervals, vectors))
}
