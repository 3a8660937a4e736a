//! HTTP clients for embedding, cross-encoder and chat providers.
//!
//! Transport failures (connection errors, timeouts, 5xx) are retried once
//! after a backoff; any reply that arrives is used as is.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use regrel_core::judge::{ChatProvider, ChatRequest};
use regrel_core::retrieval::{CrossEncoder, Embedder, EmbeddingVector, ProviderError};

pub const ENV_BASE_URL: &str = "REGREL_PROVIDER_URL";
pub const ENV_TOKEN: &str = "REGREL_PROVIDER_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: None,
            timeout: Duration::from_secs(120),
            attempts: 2,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads the base URL and optional bearer token from the environment.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_BASE_URL).ok().filter(|u| !u.is_empty())?;
        let mut cfg = RemoteConfig::new(url);
        cfg.token = std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty());
        Some(cfg)
    }
}

/// One provider endpoint set: `/embed`, `/cross`, `/chat`.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    config: RemoteConfig,
    client: Client,
    tag: String,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Transport {
                message: e.to_string(),
                attempts: 0,
            })?;
        let tag = format!("remote:{}", config.base_url);
        Ok(RemoteProvider { config, client, tag })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ProviderError> {
        let url = format!("{}{path}", self.config.base_url);
        let mut last = String::new();
        for attempt in 1..=self.config.attempts.max(1) {
            if attempt > 1 {
                thread::sleep(self.config.backoff * 2u32.pow(attempt - 2));
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(t) = &self.config.token {
                req = req.bearer_auth(t);
            }
            match req.send() {
                Ok(resp) if resp.status().is_server_error() => {
                    last = format!("{url}: status {}", resp.status());
                }
                Ok(resp) if !resp.status().is_success() => {
                    return Err(ProviderError::InvalidReply(format!("{url}: status {}", resp.status())));
                }
                Ok(resp) => {
                    return resp
                        .json::<R>()
                        .map_err(|e| ProviderError::InvalidReply(format!("{url}: {e}")));
                }
                Err(e) => last = format!("{url}: {e}"),
            }
            log::warn!("attempt {attempt} failed: {last}");
        }
        Err(ProviderError::Transport {
            message: last,
            attempts: self.config.attempts.max(1),
        })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedReply {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CrossRequest<'a> {
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct CrossReply {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

impl Embedder for RemoteProvider {
    fn provider_tag(&self) -> &str {
        &self.tag
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let reply: EmbedReply = self.post("/embed", &EmbedRequest { texts })?;
        reply
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() != reply.dim {
                    return Err(ProviderError::DimensionMismatch {
                        expected: reply.dim,
                        got: v.len(),
                    });
                }
                Ok(EmbeddingVector::new(v, self.tag.clone()))
            })
            .collect()
    }
}

impl CrossEncoder for RemoteProvider {
    fn provider_tag(&self) -> &str {
        &self.tag
    }

    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        let body = CrossRequest {
            pairs: pairs.iter().map(|(q, p)| [*q, *p]).collect(),
        };
        Ok(self.post::<_, CrossReply>("/cross", &body)?.scores)
    }
}

impl ChatProvider for RemoteProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        Ok(self.post::<_, ChatReply>("/chat", request)?.content)
    }
}
