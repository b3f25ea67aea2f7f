//! JSON-lines sidecar cache for annotation results.
//!
//! Each line is one `{"key": .., "value": ..}` record. Later lines win, so
//! appending is enough to update an entry. A torn final line (from a crash
//! mid-write) is skipped on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub stage: String,
    pub content_hash: String,
    pub prompt_version: String,
    pub model_id: String,
}

impl CacheKey {
    pub fn new(stage: &str, content: &str, prompt_version: &str, model_id: &str) -> Self {
        CacheKey {
            stage: stage.to_string(),
            content_hash: content_hash(content),
            prompt_version: prompt_version.to_string(),
            model_id: model_id.to_string(),
        }
    }
}

pub fn content_hash(content: &str) -> String {
    hex::encode(Sha256::digest(content.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct Line {
    key: CacheKey,
    value: Value,
}

struct Inner {
    map: HashMap<CacheKey, Value>,
    writer: Option<BufWriter<File>>,
}

/// Thread-safe; all access goes through one mutex, which is cheap next to
/// the LLM calls it saves.
pub struct AnnotationCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl AnnotationCache {
    /// A cache that lives only for this process.
    pub fn in_memory() -> Self {
        AnnotationCache {
            path: None,
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                writer: None,
            }),
        }
    }

    /// Load `path` if it exists and append new entries to it.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Line>(&line) {
                    Ok(l) => {
                        map.insert(l.key, l.value);
                    }
                    Err(e) => warn!("{}: skipping line {}: {e}", path.display(), n + 1),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let bytes = std::fs::read(&path)?;
        if bytes.last().is_some_and(|&b| b != b'\n') {
            // terminate a torn line so the next record starts cleanly
            file.write_all(b"\n")?;
        }
        Ok(AnnotationCache {
            path: Some(path),
            inner: Mutex::new(Inner {
                map,
                writer: Some(BufWriter::new(file)),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lock().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn get<T: DeserializeOwned>(&self, key: &CacheKey) -> Option<T> {
        let v = self.lock().map.get(key).cloned()?;
        serde_json::from_value(v).ok()
    }

    /// Insert and flush the line immediately, so a crash loses at most the
    /// entry being written.
    pub fn put<T: Serialize>(&self, key: CacheKey, value: &T) -> std::io::Result<()> {
        let value = serde_json::to_value(value).map_err(std::io::Error::other)?;
        let mut inner = self.lock();
        if inner.map.get(&key) == Some(&value) {
            return Ok(());
        }
        if let Some(w) = inner.writer.as_mut() {
            let line = serde_json::to_string(&Line {
                key: key.clone(),
                value: value.clone(),
            })
            .map_err(std::io::Error::other)?;
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        inner.map.insert(key, value);
        Ok(())
    }
}
