//! HTTP client for embedding services speaking the common `/embeddings` shape:
//! `POST {base_url}/embeddings` with `{"input": [...], "model": "..."}`,
//! answered by `{"data": [{"embedding": [...]}, ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendKind, EmbeddingBackend};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "TABEMB_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub dim: usize,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_batch() -> usize {
    64
}
fn default_timeout() -> u64 {
    60
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            dim,
            api_key: None,
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            batch_size: default_batch(),
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    input: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Decodes a service reply, checking the vector count and width.
/// Items carrying an `index` field are placed by it.
pub fn parse_embeddings_response(body: &[u8], expected: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let hard = |message: String| Error::Embedding {
        column: None,
        message,
        retryable: false,
    };
    let resp: Response =
        serde_json::from_slice(body).map_err(|e| hard(format!("malformed embeddings response: {e}")))?;
    if resp.data.len() != expected {
        return Err(hard(format!(
            "service returned {} embeddings for {expected} inputs",
            resp.data.len()
        )));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    let indexed = resp.data.iter().all(|i| i.index.is_some());
    for (pos, item) in resp.data.into_iter().enumerate() {
        if item.embedding.len() != dim {
            return Err(hard(format!(
                "dimension mismatch: service returned {}, expected {dim}",
                item.embedding.len()
            )));
        }
        let slot = if indexed { item.index.unwrap() } else { pos };
        match out.get_mut(slot) {
            Some(s @ None) => *s = Some(item.embedding),
            _ => return Err(hard(format!("invalid or duplicate index {slot} in response"))),
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

pub struct RemoteBackend {
    config: RemoteConfig,
    id: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// Builds a client; the API key falls back to `TABEMB_EMBED_API_KEY`.
    pub fn new(mut config: RemoteConfig) -> Result<Self> {
        if config.dim < 8 {
            return Err(Error::invalid(format!("embedding dimension must be at least 8, got {}", config.dim)));
        }
        if config.max_attempts == 0 || config.batch_size == 0 {
            return Err(Error::invalid("max_attempts and batch_size must be at least 1"));
        }
        if config.api_key.is_none() {
            config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        config.base_url = config.base_url.trim_end_matches('/').to_string();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(Self {
            id: format!("remote:{}:d{}", config.model, config.dim),
            config,
            agent,
        })
    }

    fn post_once(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::to_string(&Request {
            input: texts,
            model: &self.config.model,
        })
        .map_err(|e| Error::invalid(e.to_string()))?;
        let url = format!("{}/embeddings", self.config.base_url);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| Error::Embedding {
            column: None,
            message: format!("transport error: {e}"),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let bytes = resp.body_mut().read_to_vec().map_err(|e| Error::Embedding {
            column: None,
            message: format!("reading response: {e}"),
            retryable: true,
        })?;
        if status == 429 || status >= 500 {
            return Err(Error::Embedding {
                column: None,
                message: format!("service answered HTTP {status}"),
                retryable: true,
            });
        }
        if !(200..300).contains(&status) {
            return Err(Error::Embedding {
                column: None,
                message: format!("service answered HTTP {status}: {}", String::from_utf8_lossy(&bytes)),
                retryable: false,
            });
        }
        parse_embeddings_response(&bytes, texts.len(), self.config.dim)
    }

    fn post_with_retry(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut last = None;
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.post_once(texts) {
                Ok(v) => return Ok(v),
                Err(e @ Error::Embedding { retryable: true, .. }) => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "embedding request failed");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::Embedding {
            column: None,
            message: format!(
                "giving up after {} attempts: {}",
                self.config.max_attempts,
                last.map(|e| e.to_string()).unwrap_or_default()
            ),
            retryable: false,
        })
    }
}

impl EmbeddingBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteService
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size) {
            out.extend(self.post_with_retry(chunk)?);
        }
        Ok(out)
    }
}
