//! Query-time anchor selection: native matching, embedding rerank and
//! temporal slot reservation for events.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backend::{Embedder, EmbeddingVector};
use crate::entity::EntityProfile;
use crate::error::{Error, Result};
use crate::event::EventTuple;
use crate::kb::AnchorKb;
use crate::par::{self, Exec};
use crate::temporal::{
    absolute_range, detect_temporal, parse_timestamp, resolve_relative, DateRange,
    TemporalExpression, TemporalKind,
};
use crate::text::{is_stopword, tokenize};
use crate::topic::TopicCluster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k_entity: usize,
    pub k_event: usize,
    pub k_topic: usize,
    pub sigma: f64,
    pub candidate_cap: usize,
    pub temporal_reserved: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k_entity: 5,
            k_event: 5,
            k_topic: 5,
            sigma: 0.25,
            candidate_cap: 50,
            temporal_reserved: 2,
        }
    }
}

impl RetrievalConfig {
    /// Same K for every module; the reservation is clamped to K.
    pub fn with_k(k: usize) -> Self {
        let d = Self::default();
        RetrievalConfig {
            k_entity: k,
            k_event: k,
            k_topic: k,
            temporal_reserved: d.temporal_reserved.min(k),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::Argument(format!(
                "sigma {} is outside [0, 1]",
                self.sigma
            )));
        }
        if self.temporal_reserved > self.k_event {
            return Err(Error::Argument(format!(
                "temporal_reserved {} exceeds k_event {}",
                self.temporal_reserved, self.k_event
            )));
        }
        Ok(())
    }
}

/// Distinct non-stopword tokens of a query.
pub fn query_tokens(query: &str) -> BTreeSet<String> {
    tokenize(query)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

/// Order by similarity descending, then id ascending.
fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Keep entries with similarity ≥ `sigma` and return the top `k` as
/// `(index, similarity)` pairs into `scored`.
pub fn top_k(scored: &[(String, f64)], k: usize, sigma: f64) -> Vec<(usize, f64)> {
    let mut keep: Vec<usize> = (0..scored.len())
        .filter(|&i| scored[i].1 >= sigma)
        .collect();
    keep.sort_by(|&a, &b| rank_order((&scored[a].0, scored[a].1), (&scored[b].0, scored[b].1)));
    keep.truncate(k);
    keep.into_iter().map(|i| (i, scored[i].1)).collect()
}

/// Cosine similarity of `text` to an embedded query. Text that cannot be
/// embedded scores 0.
pub fn similarity(embedder: &dyn Embedder, query: Option<&EmbeddingVector>, text: &str) -> f64 {
    match (query, embedder.embed(text)) {
        (Some(q), Ok(v)) => q.dot(&v),
        _ => 0.0,
    }
}

/// Embed every candidate's compact text and score it against the query.
pub fn score_candidates(
    embedder: &dyn Embedder,
    query: &str,
    candidates: &[(String, String)],
    exec: Exec,
) -> Vec<(String, f64)> {
    let q = embedder.embed(query).ok();
    par::map(exec, candidates, |(id, text)| {
        (id.clone(), similarity(embedder, q.as_ref(), text))
    })
}

/// Rerank `(id, compact_text)` candidates against `query`.
///
/// Returns `(index into candidates, similarity)`, at most `k`, all with
/// similarity ≥ `sigma`, ordered by similarity descending then id ascending.
pub fn rerank(
    embedder: &dyn Embedder,
    query: &str,
    candidates: &[(String, String)],
    k: usize,
    sigma: f64,
    exec: Exec,
) -> Vec<(usize, f64)> {
    top_k(
        &score_candidates(embedder, query, candidates, exec),
        k,
        sigma,
    )
}

fn normalized_forms(value: &str) -> Vec<String> {
    let detected = detect_temporal(value);
    if detected.is_empty() {
        let fallback = tokenize(value).join("_");
        if fallback.is_empty() {
            vec![]
        } else {
            vec![fallback]
        }
    } else {
        detected.into_iter().map(|e| e.normalized).collect()
    }
}

fn event_ranges(ev: &EventTuple) -> Vec<DateRange> {
    let mut ranges = Vec::new();
    if let Some(abs) = &ev.when.absolute {
        for e in detect_temporal(abs) {
            if e.kind == TemporalKind::Absolute {
                ranges.extend(absolute_range(&e.normalized));
            }
        }
    }
    if let Some(rel) = &ev.when.relative {
        let anchor: Option<NaiveDate> = parse_timestamp(&ev.recorded_at).map(|t| t.date());
        if let Some(anchor) = anchor {
            for e in detect_temporal(rel) {
                match e.kind {
                    TemporalKind::Relative => {
                        ranges.extend(resolve_relative(&e.normalized, anchor))
                    }
                    TemporalKind::Absolute => ranges.extend(absolute_range(&e.normalized)),
                    TemporalKind::Recurrence => {}
                }
            }
        }
    }
    ranges
}

/// Whether an event's When matches a query temporal expression.
///
/// Relative and recurrence expressions compare normalized strings on the same
/// field. Absolute expressions match when the query's date range intersects
/// the event's absolute date or a relative date resolved against the event's
/// recorded_at.
pub fn when_matches(ev: &EventTuple, expr: &TemporalExpression) -> bool {
    match expr.kind {
        TemporalKind::Relative => ev
            .when
            .relative
            .as_deref()
            .is_some_and(|r| normalized_forms(r).contains(&expr.normalized)),
        TemporalKind::Recurrence => ev
            .when
            .recurrence
            .as_deref()
            .is_some_and(|r| normalized_forms(r).contains(&expr.normalized)),
        TemporalKind::Absolute => {
            let Some(q) = absolute_range(&expr.normalized) else {
                return false;
            };
            event_ranges(ev).iter().any(|r| r.intersects(&q))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedEntity {
    pub profile: EntityProfile,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedEvent {
    pub event: EventTuple,
    pub similarity: f64,
    pub temporal_reserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedTopic {
    pub cluster: TopicCluster,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorSelection {
    pub entities: Vec<SelectedEntity>,
    pub events: Vec<SelectedEvent>,
    pub topics: Vec<SelectedTopic>,
}

impl AnchorSelection {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.events.is_empty() && self.topics.is_empty()
    }
}

/// Select events, reserving slots for When-matching events.
///
/// `pool` is every event eligible for a reserved slot; `candidates` are the
/// native-match candidates competing for the remaining slots. Without a
/// temporal expression in the query this is plain rerank over `candidates`.
pub fn select_events_with_preservation(
    embedder: &dyn Embedder,
    query: &str,
    pool: &[&EventTuple],
    candidates: &[&EventTuple],
    cfg: &RetrievalConfig,
    exec: Exec,
) -> Vec<SelectedEvent> {
    let q = embedder.embed(query).ok();
    let score = |evs: &[&EventTuple]| -> Vec<(String, f64)> {
        par::map(exec, evs, |e| {
            (
                e.event_id.clone(),
                similarity(embedder, q.as_ref(), &e.compact_text()),
            )
        })
    };

    let expressions = detect_temporal(query);
    let reserve = cfg.temporal_reserved.min(cfg.k_event);
    let mut selected = Vec::new();
    let mut taken = BTreeSet::new();
    if !expressions.is_empty() && reserve > 0 {
        let matching: Vec<&EventTuple> = pool
            .iter()
            .copied()
            .filter(|e| expressions.iter().any(|x| when_matches(e, x)))
            .collect();
        let scored = score(&matching);
        for (i, sim) in top_k(&scored, reserve, f64::NEG_INFINITY) {
            taken.insert(matching[i].event_id.clone());
            selected.push(SelectedEvent {
                event: matching[i].clone(),
                similarity: sim,
                temporal_reserved: true,
            });
        }
    }

    let rest: Vec<&EventTuple> = candidates
        .iter()
        .copied()
        .filter(|e| !taken.contains(&e.event_id))
        .collect();
    let scored = score(&rest);
    for (i, sim) in top_k(&scored, cfg.k_event - selected.len(), cfg.sigma) {
        selected.push(SelectedEvent {
            event: rest[i].clone(),
            similarity: sim,
            temporal_reserved: false,
        });
    }
    selected
}

/// Select anchors from all three modules for `query`.
pub fn select_anchors(
    kb: &AnchorKb,
    embedder: &dyn Embedder,
    query: &str,
    cfg: &RetrievalConfig,
    exec: Exec,
) -> Result<AnchorSelection> {
    cfg.validate()?;
    if !kb.manifest.consolidated {
        return Err(Error::State(
            "knowledge base has not been consolidated".into(),
        ));
    }
    let cap = cfg.candidate_cap;

    let entity_cands = kb.entities.native_match(query, cap);
    let texts: Vec<(String, String)> = entity_cands
        .iter()
        .map(|(p, _)| (p.canonical_name.clone(), p.compact_text().to_string()))
        .collect();
    let entities = rerank(embedder, query, &texts, cfg.k_entity, cfg.sigma, exec)
        .into_iter()
        .map(|(i, similarity)| SelectedEntity {
            profile: entity_cands[i].0.clone(),
            similarity,
        })
        .collect();

    let topic_cands = kb.topics.native_match(query, cap);
    let texts: Vec<(String, String)> = topic_cands
        .iter()
        .map(|(t, _)| (t.topic_id.clone(), t.compact_text()))
        .collect();
    let topics = rerank(embedder, query, &texts, cfg.k_topic, cfg.sigma, exec)
        .into_iter()
        .map(|(i, similarity)| SelectedTopic {
            cluster: topic_cands[i].0.clone(),
            similarity,
        })
        .collect();

    let event_cands: Vec<&EventTuple> = kb
        .events
        .native_match(query, cap)
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    let pool: Vec<&EventTuple> = kb.events.events.iter().collect();
    let events = if cfg.k_event == 0 {
        Vec::new()
    } else {
        select_events_with_preservation(embedder, query, &pool, &event_cands, cfg, exec)
    };

    Ok(AnchorSelection {
        entities,
        events,
        topics,
    })
}
