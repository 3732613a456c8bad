//! 4W1O event tuples, temporal traces and field-level deduplication.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backend::EventRecord;
use crate::error::{Error, Result};
use crate::ingest::Batch;
use crate::temporal::{chrono_key, detect_temporal, parse_date, TemporalKind};
use crate::text::{content_word_set, content_words, fnv1a64, jaccard, normalize_phrase, tokenize};

pub const DEFAULT_DEDUP_TAU: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Action,
    Experience,
    StateChange,
    Plan,
    Routine,
    Social,
    Achievement,
    Other,
}

impl EventType {
    pub fn from_label(label: &str) -> Self {
        match normalize_phrase(label).replace([' ', '-'], "_").as_str() {
            "action" => EventType::Action,
            "experience" => EventType::Experience,
            "state_change" => EventType::StateChange,
            "plan" => EventType::Plan,
            "routine" => EventType::Routine,
            "social" => EventType::Social,
            "achievement" => EventType::Achievement,
            _ => EventType::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Action => "action",
            EventType::Experience => "experience",
            EventType::StateChange => "state_change",
            EventType::Plan => "plan",
            EventType::Routine => "routine",
            EventType::Social => "social",
            EventType::Achievement => "achievement",
            EventType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Importance {
    High,
    Medium,
    Low,
}

impl Importance {
    pub fn from_label(label: &str) -> Self {
        match label.trim().to_lowercase().as_str() {
            "high" => Importance::High,
            "low" => Importance::Low,
            _ => Importance::Medium,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Importance::High => "high",
            Importance::Medium => "medium",
            Importance::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhenSpec {
    pub absolute: Option<String>,
    pub relative: Option<String>,
    pub duration: Option<String>,
    pub recurrence: Option<String>,
}

impl WhenSpec {
    pub fn is_empty(&self) -> bool {
        self.fields().iter().all(|(_, v)| v.is_none())
    }

    pub fn fields(&self) -> [(&'static str, Option<&str>); 4] {
        [
            ("abs", self.absolute.as_deref()),
            ("rel", self.relative.as_deref()),
            ("dur", self.duration.as_deref()),
            ("rec", self.recurrence.as_deref()),
        ]
    }

    /// Present values joined by spaces.
    pub fn flattened(&self) -> String {
        self.fields()
            .iter()
            .filter_map(|(_, v)| *v)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// The normalized "When" used for dedup equality.
#[derive(Debug, Clone, PartialEq, Eq)]
enum NormalizedWhen {
    /// A calendar day, or the normalized text when the absolute value does not parse.
    Absolute(String),
    Relative(String),
    Absent,
}

fn normalized_absolute(text: &str) -> String {
    if let Some(d) = parse_date(text) {
        return d.format("%Y-%m-%d").to_string();
    }
    if let Some(e) = detect_temporal(text)
        .into_iter()
        .find(|e| e.kind == TemporalKind::Absolute)
    {
        return e.normalized;
    }
    normalize_phrase(text)
}

fn normalize_when(w: &WhenSpec) -> NormalizedWhen {
    if let Some(abs) = &w.absolute {
        NormalizedWhen::Absolute(normalized_absolute(abs))
    } else if let Some(rel) = &w.relative {
        NormalizedWhen::Relative(normalize_phrase(rel))
    } else {
        NormalizedWhen::Absent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTuple {
    pub event_id: String,
    pub who: Vec<String>,
    pub what: String,
    pub when: WhenSpec,
    #[serde(rename = "where")]
    pub where_: Option<String>,
    pub outcome: Option<String>,
    pub description: String,
    pub event_type: EventType,
    pub importance: Importance,
    pub source_seq_id: u64,
    /// Timestamp of the source utterance.
    pub recorded_at: String,
    pub trace_id: Option<String>,
}

/// Stable id derived from the source seq_id and the action phrase.
pub fn event_id_for(source_seq_id: u64, what: &str) -> String {
    format!(
        "ev-{:016x}",
        fnv1a64(format!("{source_seq_id}|{what}").as_bytes())
    )
}

impl EventTuple {
    /// Build a tuple from an extracted record, stamping it with its utterance's timestamp.
    pub fn from_record(rec: &EventRecord, batch: &Batch) -> Result<Self> {
        let utt = batch.get(rec.source_id).ok_or_else(|| {
            Error::Schema(format!(
                "event {:?} references seq_id {} outside batch {:?}",
                rec.what,
                rec.source_id,
                batch.span()
            ))
        })?;
        Ok(EventTuple {
            event_id: event_id_for(rec.source_id, &rec.what),
            who: rec.who.clone(),
            what: rec.what.clone(),
            when: rec.when.clone(),
            where_: rec.where_.clone(),
            outcome: rec.outcome.clone(),
            description: rec.description.clone(),
            event_type: EventType::from_label(&rec.event_type),
            importance: Importance::from_label(&rec.importance),
            source_seq_id: rec.source_id,
            recorded_at: utt.timestamp.clone(),
            trace_id: None,
        })
    }

    pub fn who_set(&self) -> BTreeSet<String> {
        self.who
            .iter()
            .map(|w| normalize_phrase(w))
            .filter(|w| !w.is_empty())
            .collect()
    }

    /// Description plus flattened When, embedded for reranking.
    pub fn compact_text(&self) -> String {
        let when = self.when.flattened();
        let base = if self.description.trim().is_empty() {
            &self.what
        } else {
            &self.description
        };
        if when.is_empty() {
            base.clone()
        } else {
            format!("{base} {when}")
        }
    }

    fn match_tokens(&self) -> BTreeSet<String> {
        let mut tokens: BTreeSet<String> = self.who.iter().flat_map(|w| tokenize(w)).collect();
        tokens.extend(content_words(&self.what));
        tokens.extend(content_words(&self.description));
        tokens
    }

    /// Time used for trace ordering: the absolute When if parseable, else recorded_at.
    fn sort_key(&self) -> (Option<chrono::NaiveDateTime>, u64) {
        let abs = self
            .when
            .absolute
            .as_deref()
            .and_then(parse_date)
            .map(|d| d.and_time(chrono::NaiveTime::MIN));
        match abs {
            Some(t) => (Some(t), self.source_seq_id),
            None => chrono_key(&self.recorded_at, self.source_seq_id),
        }
    }
}

fn eq_component(a: Option<&str>, b: Option<&str>) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) if normalize_phrase(x) == normalize_phrase(y) => 1.0,
        _ => 0.0,
    }
}

/// Average of four field matches: who Jaccard, content-word Jaccard of what,
/// and equality of normalized when and where. Absent fields never match.
pub fn dedup_score(a: &EventTuple, b: &EventTuple) -> f64 {
    let who = jaccard(&a.who_set(), &b.who_set());
    let what = jaccard(&content_word_set(&a.what), &content_word_set(&b.what));
    let when = match (normalize_when(&a.when), normalize_when(&b.when)) {
        (NormalizedWhen::Absolute(x), NormalizedWhen::Absolute(y))
        | (NormalizedWhen::Relative(x), NormalizedWhen::Relative(y))
            if x == y =>
        {
            1.0
        }
        _ => 0.0,
    };
    let place = eq_component(a.where_.as_deref(), b.where_.as_deref());
    (who + what + when + place) / 4.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalTrace {
    pub trace_id: String,
    pub title: String,
    /// Ordered by (resolved timestamp, source seq_id).
    pub event_ids: Vec<String>,
    pub participants: BTreeSet<String>,
    pub keywords: BTreeSet<String>,
}

/// What happened to an incoming event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupOutcome {
    /// Merged into the stored event at this index.
    Merged(usize),
    /// Inserted as a new event at this index.
    Inserted(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventStore {
    pub events: Vec<EventTuple>,
    pub traces: Vec<TemporalTrace>,
}

fn longer(existing: &mut String, incoming: &str) {
    if incoming.trim().chars().count() > existing.trim().chars().count() {
        *existing = incoming.to_string();
    }
}

fn longer_opt(existing: &mut Option<String>, incoming: &Option<String>) {
    match (existing.as_mut(), incoming) {
        (None, Some(v)) => *existing = Some(v.clone()),
        (Some(e), Some(v)) => longer(e, v),
        _ => {}
    }
}

fn merge_fields(into: &mut EventTuple, from: &EventTuple) {
    let known = into.who_set();
    for w in &from.who {
        if !known.contains(&normalize_phrase(w)) && !w.trim().is_empty() {
            into.who.push(w.clone());
        }
    }
    longer(&mut into.what, &from.what);
    longer(&mut into.description, &from.description);
    longer_opt(&mut into.when.absolute, &from.when.absolute);
    longer_opt(&mut into.when.relative, &from.when.relative);
    longer_opt(&mut into.when.duration, &from.when.duration);
    longer_opt(&mut into.when.recurrence, &from.when.recurrence);
    longer_opt(&mut into.where_, &from.where_);
    longer_opt(&mut into.outcome, &from.outcome);
    if into.event_type == EventType::Other {
        into.event_type = from.event_type;
    }
}

impl EventStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, event_id: &str) -> Option<&EventTuple> {
        self.events.iter().find(|e| e.event_id == event_id)
    }

    pub fn trace(&self, trace_id: &str) -> Option<&TemporalTrace> {
        self.traces.iter().find(|t| t.trace_id == trace_id)
    }

    /// Merge `incoming` into its best match if that scores strictly above `tau`,
    /// otherwise insert it. Ties go to the lowest source seq_id.
    pub fn dedup_merge(&mut self, incoming: &EventTuple, tau: f64) -> DedupOutcome {
        let best = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| (i, dedup_score(e, incoming)))
            .max_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then_with(|| {
                        self.events[b.0]
                            .source_seq_id
                            .cmp(&self.events[a.0].source_seq_id)
                    })
                    .then_with(|| b.0.cmp(&a.0))
            });
        match best {
            Some((i, score)) if score > tau => {
                merge_fields(&mut self.events[i], incoming);
                if let Some(tid) = self.events[i].trace_id.clone() {
                    let ev = self.events[i].clone();
                    let ti = self.trace_index(&tid).expect("trace exists");
                    self.absorb_into_trace(ti, &ev);
                }
                DedupOutcome::Merged(i)
            }
            _ => {
                let mut ev = incoming.clone();
                ev.trace_id = None;
                let mut n = 2;
                while self.get(&ev.event_id).is_some() {
                    ev.event_id = format!("{}-{n}", event_id_for(ev.source_seq_id, &ev.what));
                    n += 1;
                }
                self.events.push(ev);
                DedupOutcome::Inserted(self.events.len() - 1)
            }
        }
    }

    fn trace_index(&self, trace_id: &str) -> Option<usize> {
        self.traces.iter().position(|t| t.trace_id == trace_id)
    }

    fn absorb_into_trace(&mut self, ti: usize, ev: &EventTuple) {
        let trace = &mut self.traces[ti];
        trace.participants.extend(ev.who_set());
        trace.keywords.extend(content_word_set(&ev.what));
    }

    /// Attach the stored event at `index` to the first trace (in creation order)
    /// sharing a participant or a what-keyword, or start a new trace.
    pub fn link_to_trace(&mut self, index: usize) -> String {
        let ev = self.events[index].clone();
        let who = ev.who_set();
        let words = content_word_set(&ev.what);
        let found = self
            .traces
            .iter()
            .position(|t| !t.participants.is_disjoint(&who) || !t.keywords.is_disjoint(&words));
        let ti = match found {
            Some(ti) => ti,
            None => {
                let head: Vec<String> = content_words(&ev.what).into_iter().take(2).collect();
                let title = match ev.who.first() {
                    Some(first) => format!("{first}'s {} trace", head.join(" ")),
                    None => format!("{} trace", head.join(" ")),
                };
                self.traces.push(TemporalTrace {
                    trace_id: format!("trace-{:04}", self.traces.len() + 1),
                    title,
                    event_ids: Vec::new(),
                    participants: BTreeSet::new(),
                    keywords: BTreeSet::new(),
                });
                self.traces.len() - 1
            }
        };
        self.absorb_into_trace(ti, &ev);
        let trace_id = self.traces[ti].trace_id.clone();
        self.events[index].trace_id = Some(trace_id.clone());
        self.traces[ti].event_ids.push(ev.event_id.clone());
        self.sort_trace(ti);
        trace_id
    }

    fn sort_trace(&mut self, ti: usize) {
        let events = &self.events;
        let key = |id: &String| {
            events
                .iter()
                .find(|e| &e.event_id == id)
                .map(|e| e.sort_key())
        };
        self.traces[ti].event_ids.sort_by_cached_key(|id| key(id));
    }

    /// Dedup then, if new, link to a trace.
    pub fn ingest(&mut self, ev: &EventTuple, tau: f64) -> DedupOutcome {
        let outcome = self.dedup_merge(ev, tau);
        if let DedupOutcome::Inserted(i) = outcome {
            self.link_to_trace(i);
        }
        outcome
    }

    /// Participant/keyword overlap over who, content words of what and description.
    pub fn native_match(&self, query: &str, cap: usize) -> Vec<(&EventTuple, usize)> {
        let query_tokens = crate::retrieval::query_tokens(query);
        let mut scored: Vec<(&EventTuple, usize)> = self
            .events
            .iter()
            .map(|e| (e, query_tokens.intersection(&e.match_tokens()).count()))
            .filter(|(_, s)| *s > 0)
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.event_id.cmp(&b.0.event_id)));
        scored.truncate(cap);
        scored
    }
}
