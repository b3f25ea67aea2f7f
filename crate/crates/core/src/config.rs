//! TOML configuration.
//!
//! Every section is optional; an empty file selects the offline stubs.
//!
//! ```toml
//! [ingest]
//! max_chunk_tokens = 2048
//! embed_batch = 64
//! tokenizer = { chars_per_subword = 8 }
//! annotation = { head_tail_chars = 1500 }
//!
//! [embedder]
//! kind = "remote"            # or "stub"
//! url = "http://localhost:8080/v1/embeddings"
//! model = "bge-large"
//! dim = 1024
//! api_key_env = "TARAG_API_KEY"
//!
//! [llm]
//! kind = "stub"
//!
//! [generator]
//! kind = "stub_oracle"       # stub_constant, stub_oracle, or llm
//!
//! [retrieval]
//! max_anchors = 128
//! hypo_mode = "normalized_mean"
//!
//! [eval]
//! runs = 5
//! context_tokens = 16384
//! ```
//!
//! Secrets are never required in the file: `api_key_env` names an
//! environment variable that, when set, overrides `api_key`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{ConstantChoiceLlm, EvalOptions, FieldMap, OverlapOracleLlm};
use crate::ingest::IngestConfig;
use crate::providers::stub::STUB_DEFAULT_DIM;
use crate::providers::{
    DecodingParams, EmbeddingProvider, HypoMode, LlmProvider, ProviderError, Providers, RemoteEmbedder, RemoteLlm,
    RetryPolicy, StubEmbedder, StubLlm,
};
use crate::retrieval::RetrievalOverrides;
use crate::temporal::{Granularity, DEFAULT_MAX_ANCHORS};

pub const DEFAULT_API_KEY_ENV: &str = "TARAG_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn default_max_in_flight() -> usize {
    4
}

fn default_batch_size() -> usize {
    64
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}

fn default_stub_dim() -> usize {
    STUB_DEFAULT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Stub {
        #[serde(default = "default_stub_dim")]
        dim: usize,
    },
    Remote {
        url: String,
        model: String,
        dim: usize,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default)]
        api_key: Option<String>,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Stub { dim: STUB_DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmConfig {
    /// Rule-table stub; with no rules every annotation stage takes its
    /// rule-based route.
    Stub {
        #[serde(flatten)]
        table: StubLlm,
    },
    Remote {
        url: String,
        model: String,
        #[serde(default)]
        api_key: Option<String>,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig::Stub { table: StubLlm::default() }
    }
}

/// The answering model used by the evaluation harness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    StubConstant {
        #[serde(default)]
        choice: usize,
    },
    #[default]
    StubOracle,
    /// Reuse the `[llm]` provider.
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub max_anchors: usize,
    pub hypo_mode: HypoMode,
    /// Force an anchor granularity instead of choosing from the span.
    pub granularity: Option<Granularity>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            max_anchors: DEFAULT_MAX_ANCHORS,
            hypo_mode: HypoMode::default(),
            granularity: None,
        }
    }
}

impl RetrievalConfig {
    pub fn overrides(&self) -> RetrievalOverrides {
        RetrievalOverrides {
            granularity: self.granularity,
            max_anchors: Some(self.max_anchors),
            hypo_mode: Some(self.hypo_mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub runs: usize,
    pub context_tokens: usize,
    pub decoding: DecodingParams,
    /// Field mapping for `import-eval`.
    pub field_map: FieldMap,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let opts = EvalOptions::default();
        EvalConfig {
            runs: 5,
            context_tokens: opts.context_tokens,
            decoding: opts.decoding,
            field_map: FieldMap::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ingest: IngestConfig,
    pub embedder: EmbedderConfig,
    pub llm: LlmConfig,
    pub generator: GeneratorConfig,
    pub retrieval: RetrievalConfig,
    pub eval: EvalConfig,
}

fn resolve_key(api_key: &Option<String>, env: &str) -> Option<String> {
    std::env::var(env)
        .ok()
        .filter(|v| !v.is_empty())
        .or_else(|| api_key.clone())
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn embedder(&self) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        Ok(match &self.embedder {
            EmbedderConfig::Stub { dim } => Arc::new(StubEmbedder::try_new(*dim)?),
            EmbedderConfig::Remote {
                url,
                model,
                dim,
                batch_size,
                api_key,
                api_key_env,
                max_in_flight,
                retry,
            } => Arc::new(RemoteEmbedder::new(
                url.clone(),
                model.clone(),
                *dim,
                *batch_size,
                resolve_key(api_key, api_key_env),
                *retry,
                *max_in_flight,
            )?),
        })
    }

    pub fn llm(&self) -> Result<Arc<dyn LlmProvider>, ConfigError> {
        Ok(match &self.llm {
            LlmConfig::Stub { table } => Arc::new(table.clone()),
            LlmConfig::Remote {
                url,
                model,
                api_key,
                api_key_env,
                max_in_flight,
                retry,
            } => Arc::new(RemoteLlm::new(
                url.clone(),
                model.clone(),
                resolve_key(api_key, api_key_env),
                *retry,
                *max_in_flight,
            )?),
        })
    }

    pub fn providers(&self) -> Result<Providers, ConfigError> {
        Ok(Providers::new(self.embedder()?, self.llm()?))
    }

    pub fn generator(&self, providers: &Providers) -> Arc<dyn LlmProvider> {
        match self.generator {
            GeneratorConfig::StubConstant { choice } => Arc::new(ConstantChoiceLlm { choice }),
            GeneratorConfig::StubOracle => Arc::new(OverlapOracleLlm),
            GeneratorConfig::Llm => providers.llm.clone(),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            context_tokens: self.eval.context_tokens,
            tokenizer: self.ingest.tokenizer,
            overrides: self.retrieval.overrides(),
            decoding: self.eval.decoding,
        }
    }
}
