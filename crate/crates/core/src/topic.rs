//! Cross-session topic clusters: per-batch identification, overlap merging and summaries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backend::{
    complete_parsed, parse_topic_summary, parse_topics, render_prompt, CompletionProvider,
    CompletionRequest, ModeTag, PromptInput, TopicExtraction, UsageRecord,
};
use crate::error::{Error, Result};
use crate::event::Importance;
use crate::ingest::{Batch, BatchKind, Utterance};
use crate::temporal::parse_timestamp;
use crate::text::{content_words, jaccard, normalize_phrase, one_line, tokenize};

pub const MERGE_KEYWORD_JACCARD: f64 = 0.5;
pub const MERGE_SHARED_UTTERANCES: usize = 2;
pub const UNASSIGNED_LABEL: &str = "Unassigned";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub narrative: String,
    pub key_facts: Vec<String>,
    pub participants: Vec<String>,
    pub temporal_span: String,
    pub sentiment: String,
    pub importance: Importance,
    pub extra_keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCluster {
    pub topic_id: String,
    pub label: String,
    pub keywords: BTreeSet<String>,
    pub utterance_seq_ids: BTreeSet<u64>,
    pub summary: Option<TopicSummary>,
    /// Index of the earliest batch that produced this cluster.
    pub source_batch: usize,
}

impl TopicCluster {
    /// Label, first narrative sentence and keywords, embedded for reranking.
    pub fn compact_text(&self) -> String {
        let mut parts = vec![self.label.clone()];
        if let Some(s) = &self.summary {
            let first = first_sentence(&s.narrative);
            if !first.is_empty() {
                parts.push(first.to_string());
            }
        }
        parts.extend(self.keywords.iter().cloned());
        parts.join(" ")
    }

    fn match_tokens(&self) -> BTreeSet<String> {
        let mut tokens: BTreeSet<String> = tokenize(&self.label).into_iter().collect();
        for k in &self.keywords {
            tokens.extend(tokenize(k));
        }
        if let Some(s) = &self.summary {
            for f in &s.key_facts {
                tokens.extend(tokenize(f));
            }
        }
        tokens
    }
}

fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    match text.find(". ") {
        Some(i) => &text[..=i],
        None => text,
    }
}

fn keyword_set(raw: &[String], label: &str) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = raw
        .iter()
        .map(|k| normalize_phrase(k))
        .filter(|k| !k.is_empty())
        .collect();
    if set.is_empty() {
        set.extend(content_words(label));
    }
    if set.is_empty() {
        set.insert("misc".into());
    }
    set
}

/// Turn a parsed topic assignment into exclusive clusters over the batch.
///
/// Indices outside the batch are ignored, an utterance claimed by several topics
/// stays with the first, and anything left over goes to an "Unassigned" cluster.
pub fn clusters_from_extraction(extraction: &TopicExtraction, batch: &Batch) -> Vec<TopicCluster> {
    let mut assigned = BTreeSet::new();
    let mut clusters = Vec::new();
    for rec in &extraction.topics {
        let members: BTreeSet<u64> = rec
            .utterance_indices
            .iter()
            .copied()
            .filter(|s| batch.contains(*s) && !assigned.contains(s))
            .collect();
        if members.is_empty() {
            continue;
        }
        assigned.extend(members.iter().copied());
        let label = match rec.topic_label.trim() {
            "" => "Untitled topic".to_string(),
            l => l.to_string(),
        };
        clusters.push(TopicCluster {
            topic_id: format!("b{}-t{}", batch.batch_index, clusters.len()),
            keywords: keyword_set(&rec.topic_keywords, &label),
            label,
            utterance_seq_ids: members,
            summary: None,
            source_batch: batch.batch_index,
        });
    }
    let leftover: BTreeSet<u64> = batch
        .utterances
        .iter()
        .map(|u| u.seq_id)
        .filter(|s| !assigned.contains(s))
        .collect();
    if !leftover.is_empty() {
        clusters.push(TopicCluster {
            topic_id: format!("b{}-t{}", batch.batch_index, clusters.len()),
            label: UNASSIGNED_LABEL.to_string(),
            keywords: BTreeSet::from(["unassigned".to_string()]),
            utterance_seq_ids: leftover,
            summary: None,
            source_batch: batch.batch_index,
        });
    }
    clusters
}

/// Ask the provider to assign a topic batch's utterances to topics.
pub fn identify_topics(
    batch: &Batch,
    provider: &dyn CompletionProvider,
) -> Result<(Vec<TopicCluster>, UsageRecord)> {
    if batch.kind != BatchKind::Topic {
        return Err(Error::Argument(
            "identify_topics needs a topic batch".into(),
        ));
    }
    let prompt = render_prompt(ModeTag::TopicId, PromptInput::Batch(batch))?;
    let request = CompletionRequest::new(ModeTag::TopicId, prompt, batch.span())?;
    let (extraction, usage) = complete_parsed(provider, &request, parse_topics)?;
    Ok((clusters_from_extraction(&extraction, batch), usage))
}

fn should_merge(a: &TopicCluster, b: &TopicCluster) -> bool {
    jaccard(&a.keywords, &b.keywords) >= MERGE_KEYWORD_JACCARD
        || a.utterance_seq_ids
            .intersection(&b.utterance_seq_ids)
            .count()
            >= MERGE_SHARED_UTTERANCES
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut cur = x;
        while self.0[cur] != root {
            let next = self.0[cur];
            self.0[cur] = root;
            cur = next;
        }
        root
    }

    /// Union keeping the smaller index as root. Returns false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

/// Merge clusters from consecutive batches.
///
/// Two clusters merge when their keyword Jaccard is at least 0.5 or they share
/// at least two utterances. Merging is closed transitively and repeated until
/// no merged pair qualifies, so the output is a fixed point. The merged cluster
/// keeps the earliest label. Each utterance then belongs only to the surviving
/// cluster with the lowest batch index.
pub fn merge_topic_batches(mut clusters: Vec<TopicCluster>) -> Vec<TopicCluster> {
    clusters.sort_by_key(|c| c.source_batch);
    loop {
        let n = clusters.len();
        let mut uf = UnionFind::new(n);
        let mut merged_any = false;
        for i in 0..n {
            for j in i + 1..n {
                if should_merge(&clusters[i], &clusters[j]) {
                    merged_any |= uf.union(i, j);
                }
            }
        }
        if !merged_any {
            break;
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            groups.entry(uf.find(i)).or_default().push(i);
        }
        let mut slots: Vec<Option<TopicCluster>> = clusters.into_iter().map(Some).collect();
        clusters = groups
            .into_values()
            .map(|members| {
                let mut iter = members.into_iter();
                let mut base = slots[iter.next().expect("non-empty group")]
                    .take()
                    .expect("each cluster used once");
                for idx in iter {
                    let other = slots[idx].take().expect("each cluster used once");
                    base.keywords.extend(other.keywords);
                    base.utterance_seq_ids.extend(other.utterance_seq_ids);
                    base.source_batch = base.source_batch.min(other.source_batch);
                    base.summary = None;
                }
                base
            })
            .collect();
    }

    // Exclusive assignment: earliest surviving cluster keeps a contested utterance.
    let mut owner: BTreeMap<u64, usize> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        for &s in &c.utterance_seq_ids {
            owner.entry(s).or_insert(i);
        }
    }
    for (i, c) in clusters.iter_mut().enumerate() {
        c.utterance_seq_ids.retain(|s| owner[s] == i);
    }
    clusters.retain(|c| !c.utterance_seq_ids.is_empty());
    clusters.sort_by_key(|c| *c.utterance_seq_ids.first().expect("non-empty"));
    for (i, c) in clusters.iter_mut().enumerate() {
        c.topic_id = format!("topic-{:03}", i + 1);
    }
    clusters
}

/// Deterministic summary built from cluster membership alone.
pub fn template_summary(cluster: &TopicCluster, members: &[&Utterance]) -> TopicSummary {
    let mut sessions: Vec<&str> = Vec::new();
    let mut participants: Vec<String> = Vec::new();
    for u in members {
        if !sessions.contains(&u.session_id.as_str()) {
            sessions.push(&u.session_id);
        }
        if !participants.contains(&u.speaker) {
            participants.push(u.speaker.clone());
        }
    }
    let narrative = format!(
        "{}: {} utterances across sessions {}; participants {}",
        cluster.label,
        members.len(),
        sessions.join(", "),
        participants.join(", ")
    );
    let key_facts = members
        .iter()
        .take(3)
        .map(|u| format!("{}: {}", u.speaker, one_line(&u.content)))
        .collect();
    let importance = match members.len() {
        n if n >= 10 => Importance::High,
        n if n >= 4 => Importance::Medium,
        _ => Importance::Low,
    };
    TopicSummary {
        narrative,
        key_facts,
        participants,
        temporal_span: temporal_span(members),
        sentiment: "neutral".into(),
        importance,
        extra_keywords: Vec::new(),
    }
}

/// Earliest to latest member timestamp (by parsed time; raw order if none parse).
fn temporal_span(members: &[&Utterance]) -> String {
    let parsed: Vec<_> = members
        .iter()
        .filter_map(|u| parse_timestamp(&u.timestamp).map(|t| (t, u.seq_id, &u.timestamp)))
        .collect();
    let (first, last) = match (parsed.iter().min(), parsed.iter().max()) {
        (Some(lo), Some(hi)) => (lo.2.as_str(), hi.2.as_str()),
        _ => match (members.first(), members.last()) {
            (Some(a), Some(b)) => (a.timestamp.as_str(), b.timestamp.as_str()),
            _ => return String::new(),
        },
    };
    if first == last {
        first.to_string()
    } else {
        format!("{first} to {last}")
    }
}

/// Outcome of one summary call.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOutcome {
    pub cluster: TopicCluster,
    pub usage: UsageRecord,
    pub warning: Option<String>,
}

/// Attach a structured summary to `cluster`.
///
/// `utts` may hold the whole conversation; only members are used. Provider
/// failures fall back to [`template_summary`] with a warning.
pub fn summarize_topic(
    cluster: &TopicCluster,
    utts: &[Utterance],
    provider: &dyn CompletionProvider,
) -> Result<SummaryOutcome> {
    let members: Vec<&Utterance> = utts
        .iter()
        .filter(|u| cluster.utterance_seq_ids.contains(&u.seq_id))
        .collect();
    if members.is_empty() {
        return Err(Error::Argument(format!(
            "topic {} has no member utterances",
            cluster.topic_id
        )));
    }
    let template = template_summary(cluster, &members);
    let keywords: Vec<String> = cluster.keywords.iter().cloned().collect();
    let owned: Vec<Utterance> = members.iter().map(|u| (*u).clone()).collect();
    let attempt = || -> Result<(TopicSummary, UsageRecord)> {
        let prompt = render_prompt(
            ModeTag::TopicSummary,
            PromptInput::Cluster {
                label: &cluster.label,
                keywords: &keywords,
                utterances: &owned,
            },
        )?;
        let span = (owned[0].seq_id, owned[owned.len() - 1].seq_id);
        let request = CompletionRequest::new(ModeTag::TopicSummary, prompt, Some(span))?;
        let (mut summary, usage) = complete_parsed(provider, &request, parse_topic_summary)?;
        if summary.narrative.trim().is_empty() {
            return Err(Error::Schema("summary narrative is empty".into()));
        }
        if summary.key_facts.is_empty() {
            summary.key_facts = template.key_facts.clone();
        }
        Ok((summary, usage))
    };
    let (summary, usage, warning) = match attempt() {
        Ok((s, u)) => (s, u, None),
        Err(Error::NoFixture { .. }) => (template, UsageRecord::default(), None),
        Err(e) => (
            template,
            UsageRecord::default(),
            Some(format!("summary for {}: {e}", cluster.topic_id)),
        ),
    };
    let mut cluster = cluster.clone();
    cluster.summary = Some(summary);
    Ok(SummaryOutcome {
        cluster,
        usage,
        warning,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopicStore {
    pub topics: Vec<TopicCluster>,
}

impl TopicStore {
    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn get(&self, topic_id: &str) -> Option<&TopicCluster> {
        self.topics.iter().find(|t| t.topic_id == topic_id)
    }

    /// seq_id → topic_id for every assigned utterance.
    pub fn assignment(&self) -> BTreeMap<u64, Vec<&str>> {
        let mut map: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
        for t in &self.topics {
            for &s in &t.utterance_seq_ids {
                map.entry(s).or_default().push(&t.topic_id);
            }
        }
        map
    }

    /// Token overlap against label, keywords and key facts; ties by label.
    pub fn native_match(&self, query: &str, cap: usize) -> Vec<(&TopicCluster, usize)> {
        let query_tokens = crate::retrieval::query_tokens(query);
        let mut scored: Vec<(&TopicCluster, usize)> = self
            .topics
            .iter()
            .map(|t| (t, query_tokens.intersection(&t.match_tokens()).count()))
            .filter(|(_, s)| *s > 0)
            .collect();
        scored.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| a.0.label.cmp(&b.0.label))
                .then_with(|| a.0.topic_id.cmp(&b.0.topic_id))
        });
        scored.truncate(cap);
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockProvider, TopicRecord};

    fn utt(seq: u64, speaker: &str, session: &str, ts: &str) -> Utterance {
        Utterance {
            seq_id: seq,
            speaker: speaker.into(),
            content: format!("content {seq}"),
            session_id: session.into(),
            timestamp: ts.into(),
        }
    }

    fn topic_batch(index: usize, range: std::ops::Range<u64>) -> Batch {
        Batch {
            batch_index: index,
            utterances: range
                .map(|i| utt(i, "Caroline", "S1", "2023-05-08"))
                .collect(),
            kind: BatchKind::Topic,
        }
    }

    fn cluster(batch: usize, label: &str, kws: &[&str], seqs: &[u64]) -> TopicCluster {
        TopicCluster {
            topic_id: format!("b{batch}-{label}"),
            label: label.into(),
            keywords: kws.iter().map(|s| s.to_string()).collect(),
            utterance_seq_ids: seqs.iter().copied().collect(),
            summary: None,
            source_batch: batch,
        }
    }

    fn rec(label: &str, kws: &[&str], idx: &[u64]) -> TopicRecord {
        TopicRecord {
            topic_id: None,
            topic_label: label.into(),
            topic_keywords: kws.iter().map(|s| s.to_string()).collect(),
            utterance_indices: idx.to_vec(),
        }
    }

    #[test]
    fn omitted_ids_go_to_unassigned() {
        let b = topic_batch(0, 0..5);
        let ex = TopicExtraction {
            topics: vec![
                rec("Casual conversation / greetings", &["greetings"], &[0, 1]),
                rec("MedLLM debugging", &["medllm"], &[2, 3, 1, 77]),
            ],
        };
        let cs = clusters_from_extraction(&ex, &b);
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[1].utterance_seq_ids, BTreeSet::from([2, 3]));
        assert_eq!(cs[2].label, UNASSIGNED_LABEL);
        assert_eq!(cs[2].utterance_seq_ids, BTreeSet::from([4]));
    }

    #[test]
    fn single_utterance_batch() {
        let b = topic_batch(0, 0..1);
        let cs = clusters_from_extraction(&TopicExtraction { topics: vec![] }, &b);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].utterance_seq_ids, BTreeSet::from([0]));
    }

    #[test]
    fn shared_overlap_utterances_merge() {
        let a = cluster(
            0,
            "MedLLM debugging",
            &["medllm", "debug"],
            &[5, 6, 7, 8, 9],
        );
        let b = cluster(1, "Model fixes", &["hallucination", "kg"], &[7, 8, 9, 10]);
        let out = merge_topic_batches(vec![a, b]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, "MedLLM debugging");
        assert_eq!(out[0].utterance_seq_ids, (5..=10).collect());
        assert_eq!(out[0].keywords.len(), 4);
    }

    #[test]
    fn low_jaccard_without_overlap_stays_apart() {
        let a = cluster(0, "A", &["medllm", "debug"], &[1, 2]);
        let b = cluster(1, "B", &["medllm", "debugging", "kg"], &[20, 21]);
        assert_eq!(jaccard(&a.keywords, &b.keywords), 0.25);
        assert_eq!(merge_topic_batches(vec![a, b]).len(), 2);
    }

    #[test]
    fn keyword_match_links_distant_batches() {
        let a = cluster(0, "Hiking", &["hiking", "trail"], &[1, 2]);
        let b = cluster(3, "Trail runs", &["hiking", "trail", "mountain"], &[80, 81]);
        let out = merge_topic_batches(vec![b, a]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, "Hiking");
    }

    #[test]
    fn merge_is_idempotent() {
        let a = cluster(0, "X", &["x"], &[1, 2, 3]);
        let out = merge_topic_batches(vec![a.clone(), cluster(1, "X", &["x"], &[1, 2, 3])]);
        assert_eq!(out.len(), 1);
        assert_eq!(merge_topic_batches(out.clone()), out);
    }

    #[test]
    fn contested_single_utterance_goes_to_earlier_batch() {
        let a = cluster(0, "A", &["alpha"], &[1, 2, 3]);
        let b = cluster(1, "B", &["beta"], &[3, 4, 5]);
        let out = merge_topic_batches(vec![b, a]);
        assert_eq!(out.len(), 2);
        assert!(out[0].utterance_seq_ids.contains(&3));
        assert!(!out[1].utterance_seq_ids.contains(&3));
    }

    #[test]
    fn summary_spans_sessions() {
        let utts = vec![
            utt(1, "Caroline", "S1", "2023-05-08"),
            utt(2, "Caroline", "S1", "2023-05-08"),
            utt(3, "Caroline", "S1", "2023-05-08"),
            utt(40, "Caroline", "S3", "2023-06-20"),
            utt(41, "Caroline", "S3", "2023-06-20"),
            utt(42, "Caroline", "S3", "2023-06-21"),
            utt(50, "Melanie", "S4", "2023-07-01"),
        ];
        let c = cluster(0, "MedLLM", &["medllm"], &[1, 2, 3, 40, 41, 42]);
        let out = summarize_topic(&c, &utts, &MockProvider::empty()).unwrap();
        let s = out.cluster.summary.unwrap();
        assert_eq!(s.temporal_span, "2023-05-08 to 2023-06-21");
        assert_eq!(s.participants, vec!["Caroline"]);
        assert_eq!(
            s.narrative,
            "MedLLM: 6 utterances across sessions S1, S3; participants Caroline"
        );
        assert_eq!(s.key_facts.len(), 3);
        assert!(out.warning.is_none());
    }

    #[test]
    fn empty_cluster_is_argument_error() {
        let c = cluster(0, "Empty", &["x"], &[99]);
        let err =
            summarize_topic(&c, &[utt(1, "a", "S1", "t")], &MockProvider::empty()).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn native_match_counts_label_tokens() {
        let store = TopicStore {
            topics: vec![
                cluster(0, "MedLLM debugging journey", &["medllm"], &[1]),
                cluster(0, "Alpha", &["progress"], &[2]),
                cluster(0, "Beta", &["progress"], &[3]),
            ],
        };
        let hits = store.native_match("MedLLM debugging progress", 10);
        assert_eq!(hits[0].0.label, "MedLLM debugging journey");
        assert_eq!(hits[0].1, 2);
        assert_eq!(hits[1].0.label, "Alpha");
        assert_eq!(hits[2].0.label, "Beta");
        assert!(store.native_match("zebra", 10).is_empty());
    }
}
