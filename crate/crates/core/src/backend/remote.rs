//! OpenAI-compatible HTTP provider.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::retry::{with_retries, RetryPolicy};
use super::{
    Completion, CompletionProvider, CompletionRequest, Embedder, EmbeddingVector, UsageRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

struct Client {
    http: reqwest::blocking::Client,
    config: RemoteConfig,
    api_key: String,
    policy: RetryPolicy,
}

impl Client {
    fn new(config: RemoteConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Argument(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Client {
            http,
            config,
            api_key,
            policy: RetryPolicy::default(),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{path}", self.config.endpoint.trim_end_matches('/'));
        with_retries(&self.policy, std::thread::sleep, |_| {
            let transport = |message: String| Error::Transport {
                attempts: 1,
                message,
            };
            let resp = self
                .http
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send()
                .map_err(|e| transport(e.to_string()))?;
            let status = resp.status();
            if status.is_server_error() || status.as_u16() == 429 {
                return Err(transport(format!("{url} returned {status}")));
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(Error::Argument(format!("{url} returned {status}: {text}")));
            }
            resp.json::<Value>().map_err(|e| transport(e.to_string()))
        })
    }
}

pub struct RemoteProvider {
    client: Client,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        Ok(RemoteProvider {
            client: Client::new(config)?,
        })
    }
}

impl CompletionProvider for RemoteProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let body = json!({
            "model": self.client.config.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let start = Instant::now();
        let value = self.client.post("chat/completions", &body)?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::ExtractionParse {
                reason: "response has no choices[0].message.content".into(),
                raw: value.to_string(),
            })?
            .to_string();
        let usage = UsageRecord::new(
            request.prompt.chars().count() as u64,
            text.chars().count() as u64,
            start.elapsed().as_millis() as u64,
        );
        Ok(Completion { text, usage })
    }

    fn name(&self) -> &str {
        "remote"
    }
}

pub struct RemoteEmbedder {
    client: Client,
    dims: usize,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, dims: usize) -> Result<Self> {
        Ok(RemoteEmbedder {
            client: Client::new(config)?,
            dims,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Argument("cannot embed empty text".into()));
        }
        let body = json!({"model": self.client.config.embedding_model, "input": text});
        let value = self.client.post("embeddings", &body)?;
        let values: Vec<f64> = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| Error::ExtractionParse {
                reason: "response has no data[0].embedding".into(),
                raw: value.to_string(),
            })?;
        EmbeddingVector::normalized(values)
    }

    fn dims(&self) -> usize {
        self.dims
    }
}
