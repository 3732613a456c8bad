//! Lenient parsing of extractor output into typed records.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::event::{Importance, WhenSpec};
use crate::topic::TopicSummary;

use super::ModeTag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRecord {
    pub target: String,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusChangeRecord {
    pub attribute: String,
    pub from: Option<String>,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub source_id: u64,
    pub entity_name: String,
    pub entity_type: String,
    pub attributes: BTreeMap<String, String>,
    pub relations: Vec<RelationRecord>,
    pub status_changes: Vec<StatusChangeRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityExtraction {
    pub entities: Vec<EntityRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub source_id: u64,
    pub description: String,
    pub who: Vec<String>,
    pub what: String,
    pub when: WhenSpec,
    pub where_: Option<String>,
    pub outcome: Option<String>,
    pub event_type: String,
    pub importance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventExtraction {
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicRecord {
    pub topic_id: Option<i64>,
    pub topic_label: String,
    pub topic_keywords: Vec<String>,
    pub utterance_indices: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicExtraction {
    pub topics: Vec<TopicRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleExtraction {
    pub entities: EntityExtraction,
    pub events: EventExtraction,
    pub topics: TopicExtraction,
}

/// Typed payload for each mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Extraction {
    Entities(EntityExtraction),
    Events(EventExtraction),
    Topics(TopicExtraction),
    TopicSummary(TopicSummary),
    Triple(TripleExtraction),
    ProfileSummary(String),
}

/// Drop a surrounding Markdown code fence, if any.
pub fn strip_code_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    if !trimmed.starts_with("```") {
        return trimmed;
    }
    let body = match trimmed.find('\n') {
        Some(i) => &trimmed[i + 1..],
        None => return "",
    };
    let body = body.trim_end();
    body.strip_suffix("```").unwrap_or(body).trim()
}

fn document(raw: &str) -> Result<Map<String, Value>> {
    let text = strip_code_fence(raw);
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::ExtractionParse {
            reason: "top-level value is not an object".into(),
            raw: raw.to_string(),
        }),
        Err(e) => Err(Error::ExtractionParse {
            reason: e.to_string(),
            raw: raw.to_string(),
        }),
    }
}

fn required<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>> {
    match doc.get(key) {
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(Error::Schema(format!("\"{key}\" must be an array"))),
        None => Err(Error::Schema(format!("missing required key \"{key}\""))),
    }
}

/// Strings that mean "no value" in extractor output.
fn is_null_text(s: &str) -> bool {
    matches!(
        s.trim().to_lowercase().as_str(),
        "" | "null" | "none" | "n/a" | "unknown"
    )
}

fn opt_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) if !is_null_text(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(|i| opt_string(Some(i))).collect();
            (!parts.is_empty()).then(|| parts.join(", "))
        }
        _ => None,
    }
}

fn string_or_empty(v: Option<&Value>) -> String {
    opt_string(v).unwrap_or_default()
}

fn string_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items.iter().filter_map(|i| opt_string(Some(i))).collect(),
        Some(Value::String(s)) if !is_null_text(s) => s
            .split(',')
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect(),
        _ => Vec::new(),
    }
}

fn as_u64(v: Option<&Value>) -> Option<u64> {
    match v? {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn entity_record(v: &Value) -> Option<EntityRecord> {
    let obj = v.as_object()?;
    let source_id = as_u64(obj.get("source_id"))?;
    let entity_name = opt_string(obj.get("entity_name"))?;
    let attributes = match obj.get("attributes") {
        Some(Value::Object(m)) => m
            .iter()
            .filter_map(|(k, v)| opt_string(Some(v)).map(|v| (k.clone(), v)))
            .collect(),
        _ => BTreeMap::new(),
    };
    let relations = match obj.get("relations") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|r| {
                let r = r.as_object()?;
                Some(RelationRecord {
                    target: opt_string(r.get("target"))?,
                    relation: opt_string(r.get("relation").or(r.get("relation_type")))?,
                })
            })
            .collect(),
        _ => Vec::new(),
    };
    let status_changes = match obj.get("status_changes") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|s| {
                let s = s.as_object()?;
                Some(StatusChangeRecord {
                    attribute: opt_string(s.get("attribute"))?,
                    from: opt_string(s.get("from")),
                    to: opt_string(s.get("to"))?,
                })
            })
            .collect(),
        _ => Vec::new(),
    };
    Some(EntityRecord {
        source_id,
        entity_name,
        entity_type: string_or_empty(obj.get("entity_type")),
        attributes,
        relations,
        status_changes,
    })
}

fn event_record(v: &Value) -> Option<EventRecord> {
    let obj = v.as_object()?;
    let source_id = as_u64(obj.get("source_id"))?;
    let when = match obj.get("when") {
        Some(Value::Object(w)) => WhenSpec {
            absolute: opt_string(w.get("absolute")),
            relative: opt_string(w.get("relative")),
            duration: opt_string(w.get("duration")),
            recurrence: opt_string(w.get("recurrence")),
        },
        Some(Value::String(s)) if !is_null_text(s) => WhenSpec {
            relative: Some(s.trim().to_string()),
            ..WhenSpec::default()
        },
        _ => WhenSpec::default(),
    };
    let rec = EventRecord {
        source_id,
        description: string_or_empty(obj.get("description")),
        who: string_list(obj.get("who")),
        what: string_or_empty(obj.get("what")),
        when,
        where_: opt_string(obj.get("where")),
        outcome: opt_string(obj.get("outcome")),
        event_type: string_or_empty(obj.get("event_type")),
        importance: string_or_empty(obj.get("importance")),
    };
    (!rec.who.is_empty() || !rec.description.is_empty()).then_some(rec)
}

fn topic_record(v: &Value) -> Option<TopicRecord> {
    let obj = v.as_object()?;
    let utterance_indices = match obj.get("utterance_indices") {
        Some(Value::Array(items)) => items.iter().filter_map(|i| as_u64(Some(i))).collect(),
        _ => Vec::new(),
    };
    Some(TopicRecord {
        topic_id: obj.get("topic_id").and_then(|t| match t {
            Value::Number(n) => n.as_i64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }),
        topic_label: string_or_empty(obj.get("topic_label")),
        topic_keywords: string_list(obj.get("topic_keywords")),
        utterance_indices,
    })
}

fn collect<T>(items: &[Value], what: &str, f: impl Fn(&Value) -> Option<T>) -> Vec<T> {
    items
        .iter()
        .filter_map(|v| {
            let parsed = f(v);
            if parsed.is_none() {
                log::warn!("skipping malformed {what} record: {v}");
            }
            parsed
        })
        .collect()
}

fn entities_from(doc: &Map<String, Value>) -> Result<EntityExtraction> {
    Ok(EntityExtraction {
        entities: collect(required(doc, "entities")?, "entity", entity_record),
    })
}

fn events_from(doc: &Map<String, Value>) -> Result<EventExtraction> {
    Ok(EventExtraction {
        events: collect(required(doc, "events")?, "event", event_record),
    })
}

fn topics_from(doc: &Map<String, Value>) -> Result<TopicExtraction> {
    Ok(TopicExtraction {
        topics: collect(required(doc, "topics")?, "topic", topic_record),
    })
}

pub fn parse_entities(raw: &str) -> Result<EntityExtraction> {
    entities_from(&document(raw)?)
}

pub fn parse_events(raw: &str) -> Result<EventExtraction> {
    events_from(&document(raw)?)
}

pub fn parse_topics(raw: &str) -> Result<TopicExtraction> {
    topics_from(&document(raw)?)
}

/// All three keys are required.
pub fn parse_triple(raw: &str) -> Result<TripleExtraction> {
    let doc = document(raw)?;
    Ok(TripleExtraction {
        entities: entities_from(&doc)?,
        events: events_from(&doc)?,
        topics: topics_from(&doc)?,
    })
}

pub fn parse_topic_summary(raw: &str) -> Result<TopicSummary> {
    let doc = document(raw)?;
    let narrative = opt_string(doc.get("narrative"))
        .ok_or_else(|| Error::Schema("missing required key \"narrative\"".into()))?;
    Ok(TopicSummary {
        narrative,
        key_facts: string_list(doc.get("key_facts")),
        participants: string_list(doc.get("participants")),
        temporal_span: string_or_empty(doc.get("temporal_span")),
        sentiment: string_or_empty(doc.get("sentiment")),
        importance: Importance::from_label(&string_or_empty(doc.get("importance"))),
        extra_keywords: string_list(doc.get("extra_keywords")),
    })
}

pub fn parse_profile_summary(raw: &str) -> Result<String> {
    let doc = document(raw)?;
    opt_string(doc.get("summary"))
        .ok_or_else(|| Error::Schema("missing required key \"summary\"".into()))
}

/// Parse a completion for `mode` into its typed payload.
pub fn parse_extraction(raw: &str, mode: ModeTag) -> Result<Extraction> {
    Ok(match mode {
        ModeTag::Entity => Extraction::Entities(parse_entities(raw)?),
        ModeTag::Event => Extraction::Events(parse_events(raw)?),
        ModeTag::TopicId => Extraction::Topics(parse_topics(raw)?),
        ModeTag::TopicSummary => Extraction::TopicSummary(parse_topic_summary(raw)?),
        ModeTag::Triple => Extraction::Triple(parse_triple(raw)?),
        ModeTag::ProfileSummary => Extraction::ProfileSummary(parse_profile_summary(raw)?),
    })
}
