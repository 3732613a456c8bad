//! Provider contract for completions and embeddings, prompt assembly and
//! structured-response parsing.

mod mock;
mod parse;
mod prompts;
#[cfg(feature = "remote")]
mod remote;
mod retry;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mock::{HashEmbedder, MockProvider, MOCK_EMBEDDING_DIMS};
pub use parse::{
    parse_entities, parse_events, parse_extraction, parse_profile_summary, parse_topic_summary,
    parse_topics, parse_triple, strip_code_fence, EntityExtraction, EntityRecord, EventExtraction,
    EventRecord, Extraction, RelationRecord, StatusChangeRecord, TopicExtraction, TopicRecord,
    TripleExtraction,
};
pub use prompts::{render_prompt, PromptInput, ANSWER_TEMPLATE};
#[cfg(feature = "remote")]
pub use remote::{RemoteConfig, RemoteEmbedder, RemoteProvider};
pub use retry::{with_retries, RetryPolicy};

/// Which extraction or summarization task a completion serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    Entity,
    Event,
    TopicId,
    TopicSummary,
    Triple,
    ProfileSummary,
}

impl ModeTag {
    pub const ALL: [ModeTag; 6] = [
        ModeTag::Entity,
        ModeTag::Event,
        ModeTag::TopicId,
        ModeTag::TopicSummary,
        ModeTag::Triple,
        ModeTag::ProfileSummary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeTag::Entity => "entity",
            ModeTag::Event => "event",
            ModeTag::TopicId => "topic_id",
            ModeTag::TopicSummary => "topic_summary",
            ModeTag::Triple => "triple",
            ModeTag::ProfileSummary => "profile_summary",
        }
    }
}

impl fmt::Display for ModeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModeTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown template {s:?}")))
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    /// Always 0.
    pub temperature: f64,
    pub max_tokens: u32,
    pub mode_tag: ModeTag,
    /// Inclusive seq_id range of the input, used by fixture-driven providers.
    pub span: Option<(u64, u64)>,
}

impl CompletionRequest {
    pub fn new(mode_tag: ModeTag, prompt: String, span: Option<(u64, u64)>) -> Result<Self> {
        if prompt.trim().is_empty() {
            return Err(Error::Argument("prompt must not be empty".into()));
        }
        Ok(CompletionRequest {
            prompt,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            mode_tag,
            span,
        })
    }
}

/// Character and latency accounting for provider calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub prompt_chars: u64,
    pub response_chars: u64,
    /// `ceil((prompt_chars + response_chars) / 4)`.
    pub approx_tokens: u64,
    pub wall_ms: u64,
}

impl UsageRecord {
    pub fn new(prompt_chars: u64, response_chars: u64, wall_ms: u64) -> Self {
        UsageRecord {
            prompt_chars,
            response_chars,
            approx_tokens: (prompt_chars + response_chars).div_ceil(4),
            wall_ms,
        }
    }

    pub fn add(&mut self, other: &UsageRecord) {
        *self = UsageRecord::new(
            self.prompt_chars + other.prompt_chars,
            self.response_chars + other.response_chars,
            self.wall_ms + other.wall_ms,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: UsageRecord,
}

/// Text-completion backend. Implementations hold no per-call mutable state.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion>;

    /// Short label for logs and manifests.
    fn name(&self) -> &str;
}

/// Unit-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub dims: usize,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalize raw values. Fails on a zero vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Argument("cannot normalize a zero embedding".into()));
        }
        Ok(EmbeddingVector {
            dims: values.len(),
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Dot product; equals cosine similarity for unit vectors.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    fn dims(&self) -> usize;
}

/// Call the provider and parse the response, retrying once when the text does
/// not parse or misses required keys. Usage of both calls is summed.
pub fn complete_parsed<T>(
    provider: &dyn CompletionProvider,
    request: &CompletionRequest,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<(T, UsageRecord)> {
    let mut usage = UsageRecord::default();
    let mut last_err = None;
    for attempt in 1..=2 {
        let completion = provider.complete(request)?;
        usage.add(&completion.usage);
        match parse(&completion.text) {
            Ok(value) => return Ok((value, usage)),
            Err(e @ (Error::ExtractionParse { .. } | Error::Schema(_))) => {
                log::warn!(
                    "{} response unusable (attempt {attempt}): {e}",
                    request.mode_tag
                );
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop ran"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_tokens_round_up() {
        assert_eq!(UsageRecord::new(5, 0, 0).approx_tokens, 2);
        assert_eq!(UsageRecord::new(4, 4, 0).approx_tokens, 2);
        let mut total = UsageRecord::new(3, 0, 1);
        total.add(&UsageRecord::new(3, 0, 2));
        assert_eq!(total, UsageRecord::new(6, 0, 3));
        assert_eq!(total.approx_tokens, 2);
    }

    #[test]
    fn request_rejects_blank_prompt() {
        assert!(CompletionRequest::new(ModeTag::Entity, "  ".into(), None).is_err());
        let r = CompletionRequest::new(ModeTag::Entity, "x".into(), None).unwrap();
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.max_tokens, 4096);
    }

    #[test]
    fn mode_tags_round_trip_through_str() {
        for m in ModeTag::ALL {
            assert_eq!(m.as_str().parse::<ModeTag>().unwrap(), m);
        }
        assert!("nope".parse::<ModeTag>().is_err());
    }
}
