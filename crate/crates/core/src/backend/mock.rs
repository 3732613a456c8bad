//! Deterministic offline providers.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::text::{fnv1a64, tokenize};

use super::{
    Completion, CompletionProvider, CompletionRequest, Embedder, EmbeddingVector, ModeTag,
    UsageRecord,
};

/// Fixture-driven completion provider.
///
/// Responses are looked up by `(mode_tag, first_seq, last_seq)`, either from an
/// in-memory table or from `<root>/<mode_tag>/<first>-<last>.json`. A missing
/// fixture is reported as [`Error::NoFixture`]. Reported latency is always 0.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    root: Option<PathBuf>,
    table: HashMap<(ModeTag, u64, u64), String>,
}

impl MockProvider {
    /// A provider with no fixtures; every call reports `NoFixture`.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_dir(root: impl Into<PathBuf>) -> Self {
        MockProvider {
            root: Some(root.into()),
            table: HashMap::new(),
        }
    }

    pub fn with_response(
        mut self,
        mode: ModeTag,
        span: (u64, u64),
        response: impl Into<String>,
    ) -> Self {
        self.table.insert((mode, span.0, span.1), response.into());
        self
    }

    pub fn fixture_path(root: &Path, mode: ModeTag, span: (u64, u64)) -> PathBuf {
        root.join(mode.as_str())
            .join(format!("{}-{}.json", span.0, span.1))
    }

    fn lookup(&self, mode: ModeTag, span: (u64, u64)) -> Result<String> {
        if let Some(text) = self.table.get(&(mode, span.0, span.1)) {
            return Ok(text.clone());
        }
        let missing = || Error::NoFixture {
            mode: mode.to_string(),
            span: format!("{}-{}", span.0, span.1),
        };
        let Some(root) = &self.root else {
            return Err(missing());
        };
        let path = Self::fixture_path(root, mode, span);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(missing()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl CompletionProvider for MockProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let span = request.span.ok_or_else(|| Error::NoFixture {
            mode: request.mode_tag.to_string(),
            span: "<none>".into(),
        })?;
        let text = self.lookup(request.mode_tag, span)?;
        let usage = UsageRecord::new(
            request.prompt.chars().count() as u64,
            text.chars().count() as u64,
            0,
        );
        Ok(Completion { text, usage })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

pub const MOCK_EMBEDDING_DIMS: usize = 256;

/// Bag-of-words hashing embedding.
///
/// Tokens are lowercased runs of alphanumerics; each is hashed with 64-bit
/// FNV-1a over its UTF-8 bytes into one of 256 buckets, and the count vector is
/// L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub fn bucket(token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % MOCK_EMBEDDING_DIMS as u64) as usize
    }

    /// Sparse bucket counts for `text`.
    pub fn counts(text: &str) -> BTreeMap<usize, u32> {
        let mut counts = BTreeMap::new();
        for t in tokenize(text) {
            *counts.entry(Self::bucket(&t)).or_insert(0) += 1;
        }
        counts
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Argument("cannot embed empty text".into()));
        }
        let counts = Self::counts(text);
        if counts.is_empty() {
            return Err(Error::Argument(format!("no tokens to embed in {text:?}")));
        }
        let mut values = vec![0.0; MOCK_EMBEDDING_DIMS];
        for (bucket, n) in counts {
            values[bucket] = f64::from(n);
        }
        EmbeddingVector::normalized(values)
    }

    fn dims(&self) -> usize {
        MOCK_EMBEDDING_DIMS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_token_is_scale_invariant() {
        let e = HashEmbedder;
        assert_eq!(e.embed("hello hello").unwrap(), e.embed("hello").unwrap());
    }

    #[test]
    fn order_invariant() {
        let e = HashEmbedder;
        assert_eq!(
            e.embed("caroline medllm").unwrap(),
            e.embed("medllm caroline").unwrap()
        );
    }

    #[test]
    fn disjoint_vocabulary_is_orthogonal() {
        let a = "caroline medllm";
        let b = "painting sunset";
        let ba: Vec<_> = HashEmbedder::counts(a).into_keys().collect();
        let bb: Vec<_> = HashEmbedder::counts(b).into_keys().collect();
        assert!(
            ba.iter().all(|x| !bb.contains(x)),
            "bucket collision in fixture"
        );
        let e = HashEmbedder;
        assert_eq!(e.embed(a).unwrap().dot(&e.embed(b).unwrap()), 0.0);
    }

    #[test]
    fn unit_norm_and_errors() {
        let v = HashEmbedder
            .embed("The quick brown fox, the lazy dog")
            .unwrap();
        assert_eq!(v.dims, 256);
        assert!((v.norm() - 1.0).abs() < 1e-9);
        assert!(HashEmbedder.embed("   ").is_err());
        assert!(HashEmbedder.embed("?!").is_err());
    }

    #[test]
    fn mock_provider_lookup() {
        let p = MockProvider::empty().with_response(ModeTag::Entity, (0, 9), "{\"entities\":[]}");
        let req = CompletionRequest::new(ModeTag::Entity, "prompt".into(), Some((0, 9))).unwrap();
        let c = p.complete(&req).unwrap();
        assert_eq!(c.text, "{\"entities\":[]}");
        assert_eq!(c.usage, UsageRecord::new(6, 15, 0));
        let miss = CompletionRequest::new(ModeTag::Event, "prompt".into(), Some((0, 9))).unwrap();
        assert!(matches!(p.complete(&miss), Err(Error::NoFixture { .. })));
    }
}
