//! JSON-over-HTTP provider clients.
//!
//! Embeddings: `POST {"model", "input": [texts]}` answered by
//! `{"data": [{"embedding": [..]}, ..]}`. Chat: `POST {"model", "messages",
//! "temperature", "max_tokens"}` answered by
//! `{"choices": [{"message": {"content": ..}}]}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatMessage, DecodingParams, EmbeddingProvider, InflightLimiter, LlmProvider, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 500,
            multiplier: 2.0,
        }
    }
}

enum Failure {
    Retryable(String),
    Fatal(ProviderError),
}

#[derive(Debug, Clone)]
struct JsonEndpoint {
    client: Client,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: Arc<InflightLimiter>,
}

impl JsonEndpoint {
    fn new(
        url: String,
        api_key: Option<String>,
        retry: RetryPolicy,
        limiter: Arc<InflightLimiter>,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(JsonEndpoint {
            client,
            url,
            api_key,
            retry,
            limiter,
        })
    }

    fn post(&self, body: &Value) -> Result<Value, ProviderError> {
        let attempts = self.retry.attempts.max(1);
        let mut backoff = Duration::from_millis(self.retry.initial_backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.try_post(body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    warn!("request to {} failed (attempt {attempt}/{attempts}): {msg}", self.url);
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff = backoff.mul_f64(self.retry.multiplier);
                    }
                }
            }
        }
        Err(ProviderError::Unavailable { attempts, last })
    }

    fn try_post(&self, body: &Value) -> Result<Value, Failure> {
        let _permit = self.limiter.acquire();
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::PAYLOAD_TOO_LARGE {
            let size = body.get("input").and_then(Value::as_array).map_or(0, Vec::len);
            return Err(Failure::Fatal(ProviderError::BatchTooLarge { size }));
        }
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if !status.is_success() {
            return Err(Failure::Fatal(ProviderError::InvalidResponse(format!(
                "HTTP {status}: {}",
                truncate(&text, 200)
            ))));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(ProviderError::InvalidResponse(e.to_string())))
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: JsonEndpoint,
    model: String,
    dim: usize,
    batch_size: usize,
}

impl RemoteEmbedder {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        batch_size: usize,
        api_key: Option<String>,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, ProviderError> {
        if dim == 0 || batch_size == 0 {
            return Err(ProviderError::Config("dim and batch_size must be positive".into()));
        }
        Ok(RemoteEmbedder {
            endpoint: JsonEndpoint::new(
                url.into(),
                api_key,
                retry,
                Arc::new(InflightLimiter::new(max_in_flight)),
                Duration::from_secs(120),
            )?,
            model: model.into(),
            dim,
            batch_size,
        })
    }

    fn embed_one_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = json!({ "model": self.model, "input": texts });
        let resp: EmbeddingResponse = serde_json::from_value(self.endpoint.post(&body)?)
            .map_err(|e| ProviderError::InvalidResponse(e.to_string()))?;
        let mut data = resp.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        if data.len() != texts.len() {
            return Err(ProviderError::CountMismatch {
                expected: texts.len(),
                got: data.len(),
            });
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}/dim={}", self.model, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// Splits into `batch_size` requests and runs up to the in-flight bound
    /// concurrently; output order follows input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        if batches.len() <= 1 {
            return batches.first().map_or(Ok(Vec::new()), |b| self.embed_one_batch(b));
        }
        let workers = self.endpoint.limiter.limit().min(batches.len());
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<Result<Vec<Vec<f32>>, ProviderError>>> = Vec::new();
        slots.resize_with(batches.len(), || None);
        let results = std::sync::Mutex::new(slots);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= batches.len() {
                        break;
                    }
                    let r = self.embed_one_batch(batches[i]);
                    let failed = r.is_err();
                    results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                    if failed {
                        next.store(batches.len(), Ordering::SeqCst);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
            match slot {
                Some(r) => out.extend(r?),
                None => {
                    return Err(ProviderError::Unavailable {
                        attempts: 0,
                        last: "batch abandoned after an earlier failure".into(),
                    })
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteLlm {
    endpoint: JsonEndpoint,
    model: String,
}

impl RemoteLlm {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, ProviderError> {
        Ok(RemoteLlm {
            endpoint: JsonEndpoint::new(
                url.into(),
                api_key,
                retry,
                Arc::new(InflightLimiter::new(max_in_flight)),
                Duration::from_secs(300),
            )?,
            model: model.into(),
        })
    }
}

impl LlmProvider for RemoteLlm {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn complete(&self, messages: &[ChatMessage], params: &DecodingParams) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let resp = self.endpoint.post(&body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::InvalidResponse("missing choices[0].message.content".into()))
    }
}

/// Embeds `probe` twice and reports whether the vectors are identical.
pub fn check_repeatability(p: &dyn EmbeddingProvider, probe: &str) -> Result<bool, ProviderError> {
    let text = vec![probe.to_string()];
    Ok(p.embed_batch(&text)? == p.embed_batch(&text)?)
}
