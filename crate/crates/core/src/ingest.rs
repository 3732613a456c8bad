//! Conversation loading and batching.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped conversation turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub seq_id: u64,
    pub speaker: String,
    pub content: String,
    pub session_id: String,
    /// ISO-8601 date or datetime, kept verbatim and parsed lazily.
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    EntityEvent,
    Topic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_index: usize,
    pub utterances: Vec<Utterance>,
    pub kind: BatchKind,
}

impl Batch {
    /// Inclusive `(first, last)` seq_id range, `None` for an empty batch.
    pub fn span(&self) -> Option<(u64, u64)> {
        Some((
            self.utterances.first()?.seq_id,
            self.utterances.last()?.seq_id,
        ))
    }

    pub fn get(&self, seq_id: u64) -> Option<&Utterance> {
        self.utterances
            .binary_search_by_key(&seq_id, |u| u.seq_id)
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn contains(&self, seq_id: u64) -> bool {
        self.get(seq_id).is_some()
    }
}

/// A parsed conversation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub conversation_id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Deserialize)]
struct RawConversation {
    conversation_id: String,
    utterances: Vec<RawUtterance>,
}

#[derive(Deserialize)]
struct RawUtterance {
    seq_id: Option<u64>,
    speaker: String,
    content: String,
    session_id: String,
    timestamp: String,
}

/// Load a conversation file and return its utterances in seq_id order.
pub fn load_conversation(path: impl AsRef<Path>) -> Result<Conversation> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conversation(&text)
}

pub fn parse_conversation(text: &str) -> Result<Conversation> {
    let root: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Schema(format!("conversation is not valid JSON: {e}")))?;
    let records = root
        .get("utterances")
        .and_then(|u| u.as_array())
        .ok_or_else(|| Error::Schema("missing \"utterances\" array".into()))?;
    // Validate record by record so the error can name the offender.
    let mut raw = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let utt: RawUtterance = serde_json::from_value(rec.clone())
            .map_err(|e| Error::Schema(format!("utterance record {i}: {e}")))?;
        raw.push(utt);
    }
    let conversation_id = match root.get("conversation_id") {
        Some(serde_json::Value::String(s)) => s.clone(),
        _ => return Err(Error::Schema("missing string \"conversation_id\"".into())),
    };
    let parsed = RawConversation {
        conversation_id,
        utterances: raw,
    };
    if parsed.utterances.is_empty() {
        return Err(Error::EmptyInput("conversation has no utterances".into()));
    }

    let explicit = parsed
        .utterances
        .iter()
        .filter(|u| u.seq_id.is_some())
        .count();
    if explicit != 0 && explicit != parsed.utterances.len() {
        return Err(Error::Schema(
            "seq_id must be given for every utterance or for none".into(),
        ));
    }

    let mut seen = BTreeSet::new();
    let mut prev: Option<u64> = None;
    let mut utterances = Vec::with_capacity(parsed.utterances.len());
    for (i, r) in parsed.utterances.into_iter().enumerate() {
        let seq_id = r.seq_id.unwrap_or(i as u64);
        if !seen.insert(seq_id) {
            return Err(Error::Schema(format!(
                "utterance record {i}: duplicate seq_id {seq_id}"
            )));
        }
        if prev.is_some_and(|p| seq_id <= p) {
            return Err(Error::Schema(format!(
                "utterance record {i}: seq_id {seq_id} is not increasing"
            )));
        }
        prev = Some(seq_id);
        if r.speaker.trim().is_empty() {
            return Err(Error::Schema(format!(
                "utterance record {i}: empty speaker"
            )));
        }
        if r.content.trim().is_empty() {
            return Err(Error::Schema(format!(
                "utterance record {i}: empty content"
            )));
        }
        utterances.push(Utterance {
            seq_id,
            speaker: r.speaker,
            content: r.content,
            session_id: r.session_id,
            timestamp: r.timestamp,
        });
    }
    Ok(Conversation {
        conversation_id: parsed.conversation_id,
        utterances,
    })
}

/// Distance between consecutive batch starts.
pub fn batch_stride(size: usize, overlap_fraction: f64) -> usize {
    ((size as f64) * (1.0 - overlap_fraction)).floor().max(1.0) as usize
}

/// Split utterances into fixed-size batches, optionally overlapping.
///
/// Batch `i + 1` starts `floor(size * (1 - overlap))` utterances after batch `i`.
/// The final batch may be short; no batch starts once the input is covered.
pub fn make_batches(
    utts: &[Utterance],
    size: usize,
    overlap_fraction: f64,
    kind: BatchKind,
) -> Result<Vec<Batch>> {
    if size < 1 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::Argument(format!(
            "overlap fraction {overlap_fraction} outside [0, 1)"
        )));
    }
    let stride = batch_stride(size, overlap_fraction);
    let mut batches = Vec::new();
    let mut start = 0;
    while start < utts.len() {
        let end = (start + size).min(utts.len());
        batches.push(Batch {
            batch_index: batches.len(),
            utterances: utts[start..end].to_vec(),
            kind,
        });
        if end == utts.len() {
            break;
        }
        start += stride;
    }
    Ok(batches)
}
