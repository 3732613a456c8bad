//! Dynamic entity profiles: incremental batch merging and offline consolidation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backend::{
    parse_profile_summary, render_prompt, CompletionProvider, CompletionRequest, EntityExtraction,
    ModeTag, PromptInput, UsageRecord,
};
use crate::error::{Error, Result};
use crate::ingest::Batch;
use crate::par::{self, Exec};
use crate::temporal::chrono_key;
use crate::text::{normalize_phrase, tokenize};

/// Per-observation confidence for plain attribute mentions.
pub const DEFAULT_OBSERVATION_CONFIDENCE: f64 = 0.6;
/// Per-observation confidence for explicit status transitions.
pub const HIGH_OBSERVATION_CONFIDENCE: f64 = 0.8;
pub const DEFAULT_COOCCURRENCE_THRESHOLD: u32 = 3;
/// Relation type given to edges inferred from co-occurrence.
pub const INFERRED_RELATION: &str = "associated_with";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Person,
    Concept,
    Task,
    Event,
    Item,
    Location,
    Organization,
    Other,
}

impl EntityType {
    /// Lenient parse of extractor output; unknown labels map to `Other`.
    pub fn from_label(label: &str) -> Self {
        match label.trim().to_lowercase().as_str() {
            "person" | "people" => EntityType::Person,
            "concept" | "topic" => EntityType::Concept,
            "task" | "project" => EntityType::Task,
            "event" => EntityType::Event,
            "item" => EntityType::Item,
            "location" | "place" => EntityType::Location,
            "organization" | "organisation" => EntityType::Organization,
            _ => EntityType::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "person",
            EntityType::Concept => "concept",
            EntityType::Task => "task",
            EntityType::Event => "event",
            EntityType::Item => "item",
            EntityType::Location => "location",
            EntityType::Organization => "organization",
            EntityType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeValue {
    pub value: String,
    /// In (0, 1].
    pub confidence: f64,
    pub evidence_seq_ids: Vec<u64>,
}

/// A value that was held and later superseded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedAttribute {
    pub key: String,
    pub old_value: String,
    pub superseded_at_seq: u64,
    pub old_confidence: f64,
}

/// Conflicting evidence that lost against the held value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCandidate {
    pub key: String,
    pub value: String,
    pub confidence: f64,
    pub seq_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub source: String,
    pub target: String,
    pub relation_type: String,
    /// Produced by co-occurrence inference rather than extraction.
    pub inferred: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimelineKind {
    StatusChange,
    EventMention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub description: String,
    pub timestamp: String,
    pub seq_id: u64,
    pub kind: TimelineKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub canonical_name: String,
    pub entity_type: EntityType,
    pub attributes: BTreeMap<String, AttributeValue>,
    pub attribute_history: Vec<ArchivedAttribute>,
    #[serde(default)]
    pub candidates: Vec<AttributeCandidate>,
    pub relations: Vec<Relation>,
    pub timeline: Vec<TimelineEntry>,
    pub co_occurrences: BTreeMap<String, u32>,
    pub summary: String,
}

impl EntityProfile {
    pub fn new(canonical_name: impl Into<String>, entity_type: EntityType) -> Self {
        EntityProfile {
            canonical_name: canonical_name.into(),
            entity_type,
            attributes: BTreeMap::new(),
            attribute_history: Vec::new(),
            candidates: Vec::new(),
            relations: Vec::new(),
            timeline: Vec::new(),
            co_occurrences: BTreeMap::new(),
            summary: String::new(),
        }
    }

    /// Attributes by descending confidence, ties by key.
    pub fn attributes_by_confidence(&self) -> Vec<(&String, &AttributeValue)> {
        let mut attrs: Vec<_> = self.attributes.iter().collect();
        attrs.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence).then(a.0.cmp(b.0)));
        attrs
    }

    /// Deterministic `<name> (<type>): k1=v1; ...; relations: r1, ...` summary.
    pub fn template_summary(&self) -> String {
        let mut parts: Vec<String> = self
            .attributes_by_confidence()
            .into_iter()
            .map(|(k, v)| format!("{k}={}", v.value))
            .collect();
        if !self.relations.is_empty() {
            let rels: Vec<String> = self
                .relations
                .iter()
                .map(|r| format!("{} {}", r.relation_type, r.target))
                .collect();
            parts.push(format!("relations: {}", rels.join(", ")));
        }
        let head = format!("{} ({}):", self.canonical_name, self.entity_type.as_str());
        if parts.is_empty() {
            head
        } else {
            format!("{head} {}", parts.join("; "))
        }
    }

    /// Text embedded for reranking.
    pub fn compact_text(&self) -> &str {
        if self.summary.trim().is_empty() {
            &self.canonical_name
        } else {
            &self.summary
        }
    }

    fn sort_timeline(&mut self) {
        self.timeline
            .sort_by_cached_key(|t| chrono_key(&t.timestamp, t.seq_id));
    }

    fn match_tokens(&self) -> BTreeSet<String> {
        let mut tokens: BTreeSet<String> = tokenize(&self.canonical_name).into_iter().collect();
        for v in self.attributes.values() {
            tokens.extend(tokenize(&v.value));
        }
        tokens.extend(tokenize(&self.summary));
        tokens
    }
}

/// Noisy-or update for repeated evidence of the same value.
pub fn accumulate_confidence(existing: &AttributeValue, seq_id: u64, c_obs: f64) -> AttributeValue {
    let mut out = existing.clone();
    out.confidence = 1.0 - (1.0 - existing.confidence) * (1.0 - c_obs);
    out.evidence_seq_ids.push(seq_id);
    out
}

fn entity_key(name: &str) -> String {
    normalize_phrase(name)
}

/// All profiles of one conversation, keyed by normalized name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityStore {
    pub profiles: BTreeMap<String, EntityProfile>,
}

/// Non-fatal issues raised while consolidating.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsolidationReport {
    pub warnings: Vec<String>,
    pub usage: UsageRecord,
    pub inferred_relations: usize,
}

impl EntityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&EntityProfile> {
        self.profiles.get(&entity_key(name))
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityProfile> {
        self.profiles.values()
    }

    /// Merge one batch's extraction into the store.
    ///
    /// Records are applied in ascending source_id order. The whole extraction is
    /// validated before any profile changes.
    pub fn merge_extraction(&mut self, extraction: &EntityExtraction, batch: &Batch) -> Result<()> {
        if let Some(bad) = extraction
            .entities
            .iter()
            .find(|r| !batch.contains(r.source_id))
        {
            return Err(Error::Schema(format!(
                "entity {:?} references seq_id {} outside batch {:?}",
                bad.entity_name,
                bad.source_id,
                batch.span()
            )));
        }
        let mut records: Vec<_> = extraction
            .entities
            .iter()
            .filter(|r| !entity_key(&r.entity_name).is_empty())
            .collect();
        records.sort_by_key(|r| r.source_id);

        let mut mentions: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
        for rec in records {
            let key = entity_key(&rec.entity_name);
            let timestamp = batch
                .get(rec.source_id)
                .map(|u| u.timestamp.clone())
                .unwrap_or_default();
            let seq = rec.source_id;
            let incoming_type = EntityType::from_label(&rec.entity_type);
            let profile = self
                .profiles
                .entry(key.clone())
                .or_insert_with(|| EntityProfile::new(rec.entity_name.trim(), incoming_type));
            if profile.entity_type == EntityType::Other && incoming_type != EntityType::Other {
                profile.entity_type = incoming_type;
            }
            for (k, v) in &rec.attributes {
                observe(profile, k, v, DEFAULT_OBSERVATION_CONFIDENCE, seq);
            }
            for sc in &rec.status_changes {
                let attr = sc.attribute.trim();
                if attr.is_empty() || sc.to.trim().is_empty() {
                    continue;
                }
                let description = match &sc.from {
                    Some(from) => format!("{attr}: {from} -> {}", sc.to.trim()),
                    None => format!("{attr} -> {}", sc.to.trim()),
                };
                profile.timeline.push(TimelineEntry {
                    description,
                    timestamp: timestamp.clone(),
                    seq_id: seq,
                    kind: TimelineKind::StatusChange,
                });
                observe(profile, attr, &sc.to, HIGH_OBSERVATION_CONFIDENCE, seq);
            }
            for rel in &rec.relations {
                let target = rel.target.trim();
                let relation_type = rel.relation.trim();
                if target.is_empty() || relation_type.is_empty() || entity_key(target) == key {
                    continue;
                }
                profile.relations.push(Relation {
                    source: profile.canonical_name.clone(),
                    target: target.to_string(),
                    relation_type: relation_type.to_string(),
                    inferred: false,
                });
            }
            profile.sort_timeline();
            mentions.entry(seq).or_default().insert(key);
        }

        for keys in mentions.values() {
            let keys: Vec<&String> = keys.iter().collect();
            for (i, a) in keys.iter().enumerate() {
                for b in &keys[i + 1..] {
                    self.bump_cooccurrence(a, b);
                }
            }
        }
        Ok(())
    }

    fn bump_cooccurrence(&mut self, a: &str, b: &str) {
        let name_a = self.profiles[a].canonical_name.clone();
        let name_b = self.profiles[b].canonical_name.clone();
        *self
            .profiles
            .get_mut(a)
            .expect("profile exists")
            .co_occurrences
            .entry(name_b)
            .or_insert(0) += 1;
        *self
            .profiles
            .get_mut(b)
            .expect("profile exists")
            .co_occurrences
            .entry(name_a)
            .or_insert(0) += 1;
    }

    /// Co-occurrence count for an unordered pair.
    pub fn co_occurrence(&self, a: &str, b: &str) -> u32 {
        let Some(pa) = self.get(a) else { return 0 };
        let Some(pb) = self.get(b) else { return 0 };
        pa.co_occurrences
            .get(&pb.canonical_name)
            .copied()
            .unwrap_or(0)
    }

    /// Add timeline entries for events naming a profiled entity among their participants.
    pub fn attach_event_mentions(&mut self, events: &[crate::event::EventTuple]) {
        for ev in events {
            for who in &ev.who {
                let Some(profile) = self.profiles.get_mut(&entity_key(who)) else {
                    continue;
                };
                let description = if ev.description.trim().is_empty() {
                    ev.what.clone()
                } else {
                    ev.description.clone()
                };
                let entry = TimelineEntry {
                    description,
                    timestamp: ev.recorded_at.clone(),
                    seq_id: ev.source_seq_id,
                    kind: TimelineKind::EventMention,
                };
                if !entry.description.trim().is_empty() && !profile.timeline.contains(&entry) {
                    profile.timeline.push(entry);
                    profile.sort_timeline();
                }
            }
        }
    }

    /// Finalize profiles: canonicalize and deduplicate relations, infer
    /// co-occurrence relations, and generate summaries.
    ///
    /// Summary generation falls back to [`EntityProfile::template_summary`] when
    /// the provider has no answer; provider failures are reported as warnings.
    pub fn consolidate(
        &mut self,
        provider: &dyn CompletionProvider,
        cooccur_threshold: u32,
        exec: Exec,
    ) -> ConsolidationReport {
        let mut report = ConsolidationReport::default();
        let canonical: BTreeMap<String, String> = self
            .profiles
            .iter()
            .map(|(k, p)| (k.clone(), p.canonical_name.clone()))
            .collect();

        for profile in self.profiles.values_mut() {
            let mut seen = BTreeSet::new();
            let mut kept = Vec::with_capacity(profile.relations.len());
            for mut rel in std::mem::take(&mut profile.relations) {
                rel.source = profile.canonical_name.clone();
                if let Some(name) = canonical.get(&entity_key(&rel.target)) {
                    rel.target = name.clone();
                }
                if entity_key(&rel.target) == entity_key(&rel.source) {
                    continue;
                }
                let dedup_key = (
                    entity_key(&rel.target),
                    normalize_phrase(&rel.relation_type),
                );
                if seen.insert(dedup_key) {
                    kept.push(rel);
                }
            }
            profile.relations = kept;
            profile.sort_timeline();
        }

        let mut inferred = Vec::new();
        for (key_a, pa) in &self.profiles {
            for (name_b, &count) in &pa.co_occurrences {
                let key_b = entity_key(name_b);
                if key_b <= *key_a || count < cooccur_threshold {
                    continue;
                }
                let Some(pb) = self.profiles.get(&key_b) else {
                    continue;
                };
                if !self.linked(pa, pb) {
                    inferred.push((key_a.clone(), pb.canonical_name.clone()));
                }
            }
        }
        report.inferred_relations = inferred.len();
        for (key_a, target) in inferred {
            let profile = self.profiles.get_mut(&key_a).expect("profile exists");
            profile.relations.push(Relation {
                source: profile.canonical_name.clone(),
                target,
                relation_type: INFERRED_RELATION.to_string(),
                inferred: true,
            });
        }

        let profiles: Vec<&EntityProfile> = self.profiles.values().collect();
        let results = par::map(exec, &profiles, |p| summarize_profile(provider, p));
        let keys: Vec<String> = self.profiles.keys().cloned().collect();
        for (key, (summary, usage, warning)) in keys.into_iter().zip(results) {
            self.profiles.get_mut(&key).expect("profile exists").summary = summary;
            report.usage.add(&usage);
            report.warnings.extend(warning);
        }
        report
    }

    fn linked(&self, a: &EntityProfile, b: &EntityProfile) -> bool {
        let ka = entity_key(&a.canonical_name);
        let kb = entity_key(&b.canonical_name);
        a.relations.iter().any(|r| entity_key(&r.target) == kb)
            || b.relations.iter().any(|r| entity_key(&r.target) == ka)
    }

    /// Word-overlap matching over name, attribute values and summary.
    ///
    /// Scores count distinct query tokens present in the profile; results are
    /// ordered by score descending, then canonical name.
    pub fn native_match(&self, query: &str, cap: usize) -> Vec<(&EntityProfile, usize)> {
        let query_tokens = crate::retrieval::query_tokens(query);
        let mut scored: Vec<(&EntityProfile, usize)> = self
            .profiles
            .values()
            .map(|p| {
                let tokens = p.match_tokens();
                (p, query_tokens.intersection(&tokens).count())
            })
            .filter(|(_, s)| *s > 0)
            .collect();
        scored.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| a.0.canonical_name.cmp(&b.0.canonical_name))
        });
        scored.truncate(cap);
        scored
    }
}

fn observe(profile: &mut EntityProfile, key: &str, value: &str, c_obs: f64, seq: u64) {
    let key = normalize_phrase(key);
    let value = value.trim();
    if key.is_empty() || value.is_empty() {
        return;
    }
    match profile.attributes.get(&key) {
        None => {
            profile.attributes.insert(
                key,
                AttributeValue {
                    value: value.to_string(),
                    confidence: c_obs,
                    evidence_seq_ids: vec![seq],
                },
            );
        }
        Some(existing) if normalize_phrase(&existing.value) == normalize_phrase(value) => {
            // The same utterance attesting twice is one piece of evidence.
            if !existing.evidence_seq_ids.contains(&seq) {
                let updated = accumulate_confidence(existing, seq, c_obs);
                profile.attributes.insert(key, updated);
            }
        }
        Some(existing) if c_obs > existing.confidence => {
            profile.attribute_history.push(ArchivedAttribute {
                key: key.clone(),
                old_value: existing.value.clone(),
                superseded_at_seq: seq,
                old_confidence: existing.confidence,
            });
            profile.attributes.insert(
                key,
                AttributeValue {
                    value: value.to_string(),
                    confidence: c_obs,
                    evidence_seq_ids: vec![seq],
                },
            );
        }
        Some(_) => profile.candidates.push(AttributeCandidate {
            key,
            value: value.to_string(),
            confidence: c_obs,
            seq_id: seq,
        }),
    }
}

fn summarize_profile(
    provider: &dyn CompletionProvider,
    profile: &EntityProfile,
) -> (String, UsageRecord, Option<String>) {
    let template = profile.template_summary();
    let attempt = || -> Result<(String, UsageRecord)> {
        let prompt = render_prompt(ModeTag::ProfileSummary, PromptInput::Profile(&template))?;
        let span = profile
            .attributes
            .values()
            .flat_map(|a| a.evidence_seq_ids.iter().copied())
            .fold(None, |acc: Option<(u64, u64)>, s| match acc {
                None => Some((s, s)),
                Some((lo, hi)) => Some((lo.min(s), hi.max(s))),
            });
        let request = CompletionRequest::new(ModeTag::ProfileSummary, prompt, span)?;
        let completion = provider.complete(&request)?;
        let summary = parse_profile_summary(&completion.text)?;
        Ok((summary, completion.usage))
    };
    match attempt() {
        Ok((summary, usage)) if !summary.trim().is_empty() => (summary, usage, None),
        Ok((_, usage)) => (template, usage, None),
        Err(Error::NoFixture { .. }) => (template, UsageRecord::default(), None),
        Err(e) => (
            template,
            UsageRecord::default(),
            Some(format!("summary for {}: {e}", profile.canonical_name)),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{EntityRecord, MockProvider, RelationRecord, StatusChangeRecord};
    use crate::ingest::{BatchKind, Utterance};

    fn batch(range: std::ops::Range<u64>) -> Batch {
        Batch {
            batch_index: 0,
            utterances: range
                .map(|i| Utterance {
                    seq_id: i,
                    speaker: "Caroline".into(),
                    content: format!("m{i}"),
                    session_id: "S1".into(),
                    timestamp: format!("2023-05-{:02}", 1 + i % 28),
                })
                .collect(),
            kind: BatchKind::EntityEvent,
        }
    }

    fn record(seq: u64, name: &str) -> EntityRecord {
        EntityRecord {
            source_id: seq,
            entity_name: name.into(),
            entity_type: "person".into(),
            attributes: BTreeMap::new(),
            relations: vec![],
            status_changes: vec![],
        }
    }

    fn attr(seq: u64, name: &str, k: &str, v: &str) -> EntityRecord {
        let mut r = record(seq, name);
        r.attributes.insert(k.into(), v.into());
        r
    }

    fn status(seq: u64, name: &str, k: &str, from: Option<&str>, to: &str) -> EntityRecord {
        let mut r = record(seq, name);
        r.status_changes.push(StatusChangeRecord {
            attribute: k.into(),
            from: from.map(Into::into),
            to: to.into(),
        });
        r
    }

    fn merge(store: &mut EntityStore, records: Vec<EntityRecord>) {
        store
            .merge_extraction(&EntityExtraction { entities: records }, &batch(0..30))
            .unwrap();
    }

    #[test]
    fn noisy_or_accumulation() {
        let v = AttributeValue {
            value: "x".into(),
            confidence: 0.6,
            evidence_seq_ids: vec![1],
        };
        let out = accumulate_confidence(&v, 2, 0.6);
        assert!((out.confidence - 0.84).abs() < 1e-12);
        assert_eq!(out.evidence_seq_ids, vec![1, 2]);
        let one = AttributeValue {
            confidence: 1.0,
            ..v.clone()
        };
        assert_eq!(accumulate_confidence(&one, 3, 0.7).confidence, 1.0);
        let half = AttributeValue {
            confidence: 0.5,
            ..v
        };
        assert_eq!(accumulate_confidence(&half, 3, 0.0).confidence, 0.5);
    }

    #[test]
    fn higher_confidence_replaces_and_archives() {
        let mut s = EntityStore::new();
        merge(&mut s, vec![attr(1, "Caroline", "occupation", "student")]);
        merge(
            &mut s,
            vec![status(
                5,
                "Caroline",
                "occupation",
                Some("student"),
                "AI researcher",
            )],
        );
        let p = s.get("caroline").unwrap();
        assert_eq!(p.attributes["occupation"].value, "AI researcher");
        assert_eq!(p.attributes["occupation"].confidence, 0.8);
        assert_eq!(p.attribute_history.len(), 1);
        assert_eq!(p.attribute_history[0].old_value, "student");
        assert_eq!(p.attribute_history[0].superseded_at_seq, 5);
        assert_eq!(p.timeline.len(), 1);
        assert_eq!(p.timeline[0].kind, TimelineKind::StatusChange);
    }

    #[test]
    fn lower_or_equal_confidence_is_kept_as_candidate() {
        let mut s = EntityStore::new();
        merge(&mut s, vec![attr(1, "Caroline", "occupation", "student")]);
        merge(&mut s, vec![attr(2, "Caroline", "occupation", "teacher")]);
        let p = s.get("Caroline").unwrap();
        assert_eq!(p.attributes["occupation"].value, "student");
        assert!(p.attribute_history.is_empty());
        assert_eq!(p.candidates.len(), 1);
        assert_eq!(p.candidates[0].value, "teacher");
    }

    #[test]
    fn repeated_value_accumulates() {
        let mut s = EntityStore::new();
        merge(
            &mut s,
            vec![
                attr(1, "Caroline", "project", "MedLLM"),
                attr(3, "caroline", "Project", "medllm"),
                attr(3, "Caroline", "project", "MedLLM"),
            ],
        );
        let a = &s.get("Caroline").unwrap().attributes["project"];
        assert!((a.confidence - 0.84).abs() < 1e-12);
        assert_eq!(a.evidence_seq_ids, vec![1, 3]);
    }

    #[test]
    fn cooccurrence_is_symmetric_per_utterance() {
        let mut s = EntityStore::new();
        merge(
            &mut s,
            vec![
                record(7, "Caroline"),
                record(7, "MedLLM"),
                record(8, "MedLLM"),
            ],
        );
        assert_eq!(s.co_occurrence("Caroline", "MedLLM"), 1);
        assert_eq!(s.co_occurrence("MedLLM", "Caroline"), 1);
        assert_eq!(s.get("Caroline").unwrap().co_occurrences["MedLLM"], 1);
    }

    #[test]
    fn out_of_batch_seq_is_schema_error() {
        let mut s = EntityStore::new();
        let err = s
            .merge_extraction(
                &EntityExtraction {
                    entities: vec![record(99, "Caroline")],
                },
                &batch(0..10),
            )
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(s.is_empty());
    }

    fn store_with_pair_count(n: u64) -> EntityStore {
        let mut s = EntityStore::new();
        let recs = (0..n)
            .flat_map(|i| [record(i, "Caroline"), record(i, "Melanie")])
            .collect();
        merge(&mut s, recs);
        s
    }

    #[test]
    fn three_comentions_infer_relation() {
        let mut s = store_with_pair_count(3);
        let report = s.consolidate(&MockProvider::empty(), 3, Exec::Sequential);
        assert_eq!(report.inferred_relations, 1);
        let rels = &s.get("Caroline").unwrap().relations;
        assert_eq!(rels.len(), 1);
        assert_eq!(rels[0].relation_type, INFERRED_RELATION);
        assert!(rels[0].inferred);
        assert_eq!(rels[0].target, "Melanie");
    }

    #[test]
    fn two_comentions_do_not() {
        let mut s = store_with_pair_count(2);
        s.consolidate(&MockProvider::empty(), 3, Exec::Sequential);
        assert!(s.iter().all(|p| p.relations.is_empty()));
    }

    #[test]
    fn existing_edge_blocks_inference() {
        let mut s = store_with_pair_count(3);
        let mut r = record(4, "Melanie");
        r.relations.push(RelationRecord {
            target: "caroline".into(),
            relation: "friend".into(),
        });
        merge(&mut s, vec![r]);
        s.consolidate(&MockProvider::empty(), 3, Exec::Sequential);
        assert!(s.get("Caroline").unwrap().relations.is_empty());
        let m = &s.get("Melanie").unwrap().relations;
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].target, "Caroline");
    }

    #[test]
    fn duplicate_relations_collapse_to_earliest() {
        let mut s = EntityStore::new();
        let mut a = record(1, "Caroline");
        a.relations.push(RelationRecord {
            target: "MedLLM".into(),
            relation: "developer".into(),
        });
        let mut b = a.clone();
        b.source_id = 2;
        merge(&mut s, vec![a, b, record(2, "MedLLM")]);
        s.consolidate(&MockProvider::empty(), 3, Exec::Sequential);
        let rels = &s.get("Caroline").unwrap().relations;
        assert_eq!(rels.len(), 1);
        assert_eq!(rels[0].relation_type, "developer");
    }

    #[test]
    fn template_summary_orders_by_confidence() {
        let mut s = EntityStore::new();
        let mut r = attr(1, "Caroline", "hobby", "hiking");
        r.relations.push(RelationRecord {
            target: "MedLLM".into(),
            relation: "developer".into(),
        });
        merge(
            &mut s,
            vec![
                r,
                status(2, "Caroline", "occupation", None, "AI researcher"),
            ],
        );
        s.consolidate(&MockProvider::empty(), 3, Exec::Sequential);
        assert_eq!(
            s.get("Caroline").unwrap().summary,
            "Caroline (person): occupation=AI researcher; hobby=hiking; relations: developer MedLLM"
        );
    }

    #[test]
    fn native_match_ranks_by_overlap_then_name() {
        let mut s = EntityStore::new();
        merge(
            &mut s,
            vec![
                attr(1, "Caroline", "project", "MedLLM"),
                record(2, "MedLLM"),
                record(3, "Zed"),
                attr(4, "Anna", "project", "MedLLM"),
            ],
        );
        s.consolidate(&MockProvider::empty(), 3, Exec::Sequential);
        let hits = s.native_match("Caroline MedLLM", 10);
        let names: Vec<_> = hits
            .iter()
            .map(|(p, sc)| (p.canonical_name.as_str(), *sc))
            .collect();
        assert_eq!(names, vec![("Caroline", 2), ("Anna", 1), ("MedLLM", 1)]);
        assert!(s.native_match("quantum astrophysics", 10).is_empty());
        assert_eq!(s.native_match("Caroline MedLLM", 1).len(), 1);
    }
}
