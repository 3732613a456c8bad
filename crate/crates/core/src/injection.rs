//! Query expansion, anchor context formatting and answer-prompt assembly.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backend::ANSWER_TEMPLATE;
use crate::entity::EntityProfile;
use crate::error::{Error, Result};
use crate::event::EventTuple;
use crate::retrieval::AnchorSelection;
use crate::topic::TopicCluster;

pub const DEFAULT_QUERY_BUDGET: usize = 9;
pub const DEFAULT_REPLACE_COUNT: usize = 9;
pub const DEFAULT_RETRIEVAL_LIMIT: usize = 60;
pub const MAX_RELATIONS: usize = 5;
pub const MAX_TIMELINE: usize = 5;
pub const MAX_KEY_FACTS: usize = 5;
pub const NONE_AVAILABLE: &str = "None available.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleTag {
    Topic,
    Entity,
    Event,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleQueries {
    pub topic: Vec<String>,
    pub entity: Vec<String>,
    pub event: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedQuerySet {
    pub queries: Vec<String>,
    pub provenance: Vec<ModuleTag>,
}

fn push_unique(out: &mut Vec<String>, seen: &mut BTreeSet<String>, q: String) {
    let q = q.split_whitespace().collect::<Vec<_>>().join(" ");
    if !q.is_empty() && seen.insert(q.clone()) {
        out.push(q);
    }
}

fn entity_queries(p: &EntityProfile, out: &mut Vec<String>, seen: &mut BTreeSet<String>) {
    for (_, attr) in p.attributes_by_confidence() {
        push_unique(out, seen, format!("{} {}", p.canonical_name, attr.value));
    }
    for r in &p.relations {
        push_unique(
            out,
            seen,
            format!("{} {} {}", p.canonical_name, r.relation_type, r.target),
        );
    }
}

fn event_queries(e: &EventTuple, out: &mut Vec<String>, seen: &mut BTreeSet<String>) {
    let base = format!("{} {}", e.who.join(", "), e.what);
    push_unique(out, seen, base.clone());
    let when = e.when.fields().into_iter().find_map(|(_, v)| v);
    if let Some(when) = when {
        push_unique(out, seen, format!("{base} {when}"));
    }
}

fn topic_queries(t: &TopicCluster, out: &mut Vec<String>, seen: &mut BTreeSet<String>) {
    let Some(s) = &t.summary else {
        return;
    };
    for fact in &s.key_facts {
        push_unique(out, seen, fact.clone());
    }
    for who in &s.participants {
        push_unique(out, seen, format!("{who} {}", t.label));
    }
}

/// Candidate expansion queries per module, deduplicated in order.
pub fn generate_module_queries(selection: &AnchorSelection) -> ModuleQueries {
    let mut q = ModuleQueries::default();
    let mut seen = BTreeSet::new();
    for t in &selection.topics {
        topic_queries(&t.cluster, &mut q.topic, &mut seen);
    }
    let mut seen = BTreeSet::new();
    for e in &selection.entities {
        entity_queries(&e.profile, &mut q.entity, &mut seen);
    }
    let mut seen = BTreeSet::new();
    for e in &selection.events {
        event_queries(&e.event, &mut q.event, &mut seen);
    }
    q
}

/// Interleave topic, entity and event queries one per module per round.
///
/// A query already taken is skipped and the same module draws again, so
/// duplicates never consume budget.
pub fn round_robin_merge(
    topic: &[String],
    entity: &[String],
    event: &[String],
    budget: usize,
) -> ExpandedQuerySet {
    let lists = [
        (ModuleTag::Topic, topic),
        (ModuleTag::Entity, entity),
        (ModuleTag::Event, event),
    ];
    let mut cursor = [0usize; 3];
    let mut seen = BTreeSet::new();
    let mut out = ExpandedQuerySet::default();
    loop {
        let mut drew = false;
        for (m, (tag, list)) in lists.iter().enumerate() {
            if out.queries.len() >= budget {
                return out;
            }
            while cursor[m] < list.len() {
                let q = &list[cursor[m]];
                cursor[m] += 1;
                if seen.insert(q.clone()) {
                    out.queries.push(q.clone());
                    out.provenance.push(*tag);
                    drew = true;
                    break;
                }
            }
        }
        if !drew {
            return out;
        }
    }
}

/// Generate and interleave expansion queries for a selection.
pub fn expand_queries(selection: &AnchorSelection, budget: usize) -> ExpandedQuerySet {
    let q = generate_module_queries(selection);
    round_robin_merge(&q.topic, &q.entity, &q.event, budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    Original,
    Expanded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub text: String,
    pub similarity: f64,
    pub source: EntrySource,
}

fn by_similarity_desc(a: &RetrievedEntry, b: &RetrievedEntry) -> std::cmp::Ordering {
    b.similarity.total_cmp(&a.similarity)
}

/// Replace the `replace_count` lowest-similarity originals with the best
/// expanded entries.
///
/// Expanded entries whose text matches a surviving original (or an earlier
/// expanded entry) are skipped. If too few remain, removed originals are put
/// back best-first, so the output is always as long as `original`.
pub fn merge_retrieval(
    original: &[RetrievedEntry],
    expanded: &[RetrievedEntry],
    replace_count: usize,
) -> Result<Vec<RetrievedEntry>> {
    if replace_count > original.len() {
        return Err(Error::Argument(format!(
            "replace_count {replace_count} exceeds {} original entries",
            original.len()
        )));
    }
    let mut sorted = original.to_vec();
    sorted.sort_by(by_similarity_desc);
    let removed = sorted.split_off(original.len() - replace_count);
    let mut out = sorted;

    let mut texts: BTreeSet<String> = out.iter().map(|e| e.text.clone()).collect();
    let mut pool = expanded.to_vec();
    pool.sort_by(by_similarity_desc);
    let mut inserted = 0;
    for e in pool {
        if inserted == replace_count {
            break;
        }
        if texts.insert(e.text.clone()) {
            out.push(e);
            inserted += 1;
        }
    }
    out.extend(removed.into_iter().take(replace_count - inserted));
    out.sort_by(by_similarity_desc);
    Ok(out)
}

/// The three anchor context blocks, each without its header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionContext {
    pub topic_block: String,
    pub entity_block: String,
    pub event_block: String,
}

impl InjectionContext {
    /// Blocks under their headers, as they appear in the answer prompt.
    pub fn render(&self) -> String {
        format!(
            "Topic Summaries:\n{}\n\nEntity Profiles:\n{}\n\nStructured Event Tuples & Traces:\n{}\n",
            self.topic_block, self.entity_block, self.event_block
        )
    }
}

fn dash(v: Option<&str>) -> &str {
    match v {
        Some(s) if !s.trim().is_empty() => s,
        _ => "-",
    }
}

fn dash_owned(s: String) -> String {
    if s.trim().is_empty() {
        "-".into()
    } else {
        s
    }
}

pub fn format_entity(p: &EntityProfile) -> String {
    let attrs: Vec<String> = p
        .attributes_by_confidence()
        .into_iter()
        .map(|(k, v)| format!("{k}={}", v.value))
        .collect();
    let rels: Vec<String> = p
        .relations
        .iter()
        .take(MAX_RELATIONS)
        .map(|r| format!("{} {}", r.relation_type, r.target))
        .collect();
    let skip = p.timeline.len().saturating_sub(MAX_TIMELINE);
    let timeline: Vec<String> = p.timeline[skip..]
        .iter()
        .map(|t| format!("{} {}", t.timestamp, t.description))
        .collect();
    format!(
        "- {} [{}] | attrs: {} | rel: {} | timeline: {} | {}",
        p.canonical_name,
        p.entity_type.as_str(),
        dash_owned(attrs.join("; ")),
        dash_owned(rels.join("; ")),
        dash_owned(timeline.join("; ")),
        dash(Some(&p.summary)),
    )
}

pub fn format_event(e: &EventTuple) -> String {
    let w = &e.when;
    format!(
        "- [{}/{}] {} | Who: {} | What: {} | When: abs={};rel={};dur={};rec={} | Where: {} | Outcome: {} | at {} | trace {}",
        e.event_type.as_str(),
        e.importance.as_str(),
        dash(Some(&e.description)),
        dash_owned(e.who.join(",")),
        dash(Some(&e.what)),
        dash(w.absolute.as_deref()),
        dash(w.relative.as_deref()),
        dash(w.duration.as_deref()),
        dash(w.recurrence.as_deref()),
        dash(e.where_.as_deref()),
        dash(e.outcome.as_deref()),
        dash(Some(&e.recorded_at)),
        dash(e.trace_id.as_deref()),
    )
}

pub fn format_topic(t: &TopicCluster) -> String {
    let kw = t.keywords.iter().cloned().collect::<Vec<_>>().join(",");
    match &t.summary {
        Some(s) => format!(
            "- {} | participants: {} | span: {} | {} | facts: {} | kw: {}",
            t.label,
            dash_owned(s.participants.join(",")),
            dash(Some(&s.temporal_span)),
            dash(Some(&s.narrative)),
            dash_owned(
                s.key_facts
                    .iter()
                    .take(MAX_KEY_FACTS)
                    .cloned()
                    .collect::<Vec<_>>()
                    .join("; ")
            ),
            dash_owned(kw),
        ),
        None => format!(
            "- {} | participants: - | span: - | - | facts: - | kw: {}",
            t.label,
            dash_owned(kw)
        ),
    }
}

fn block(lines: Vec<String>) -> String {
    if lines.is_empty() {
        NONE_AVAILABLE.to_string()
    } else {
        lines.join("\n")
    }
}

pub fn format_injection(selection: &AnchorSelection) -> InjectionContext {
    InjectionContext {
        topic_block: block(
            selection
                .topics
                .iter()
                .map(|t| format_topic(&t.cluster))
                .collect(),
        ),
        entity_block: block(
            selection
                .entities
                .iter()
                .map(|e| format_entity(&e.profile))
                .collect(),
        ),
        event_block: block(
            selection
                .events
                .iter()
                .map(|e| format_event(&e.event))
                .collect(),
        ),
    }
}

/// Host-side memories for the two speakers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostMemories {
    pub speaker_1_name: String,
    pub speaker_1_memories: String,
    pub speaker_2_name: String,
    pub speaker_2_memories: String,
}

impl HostMemories {
    /// Parse a two-section file where each section starts with `## <speaker>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("## ") {
                sections.push((name.trim().to_string(), Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else if !line.trim().is_empty() {
                return Err(Error::Schema(
                    "memories file must start with a '## <speaker>' header".into(),
                ));
            }
        }
        if sections.len() > 2 {
            return Err(Error::Schema(format!(
                "memories file has {} speaker sections, expected at most 2",
                sections.len()
            )));
        }
        let mut it = sections
            .into_iter()
            .map(|(name, body)| (name, body.join("\n").trim().to_string()));
        let (speaker_1_name, speaker_1_memories) = it.next().unwrap_or_default();
        let (speaker_2_name, speaker_2_memories) = it.next().unwrap_or_default();
        Ok(HostMemories {
            speaker_1_name,
            speaker_1_memories,
            speaker_2_name,
            speaker_2_memories,
        })
    }
}

/// Fill the answer-generation template.
pub fn assemble_prompt(
    question: &str,
    memories: &HostMemories,
    ctx: &InjectionContext,
) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::Argument("question must not be empty".into()));
    }
    let values = [
        ("speaker_1_name", memories.speaker_1_name.as_str()),
        ("speaker_1_memories", memories.speaker_1_memories.as_str()),
        ("speaker_2_name", memories.speaker_2_name.as_str()),
        ("speaker_2_memories", memories.speaker_2_memories.as_str()),
        ("topic_context", ctx.topic_block.as_str()),
        ("entity_context", ctx.entity_block.as_str()),
        ("event_context", ctx.event_block.as_str()),
        ("question", question.trim()),
    ];
    Ok(fill_placeholders(ANSWER_TEMPLATE, &values))
}

/// Single-pass `{name}` substitution; inserted text is never rescanned.
fn fill_placeholders(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn worked_round_robin_example() {
        let out = round_robin_merge(&s(&["t1", "t2"]), &s(&["e1"]), &s(&["v1", "v2", "v3"]), 9);
        assert_eq!(out.queries, s(&["t1", "e1", "v1", "t2", "v2", "v3"]));
        use ModuleTag::*;
        assert_eq!(
            out.provenance,
            vec![Topic, Entity, Event, Topic, Event, Event]
        );
    }

    #[test]
    fn duplicates_do_not_consume_budget() {
        let out = round_robin_merge(&s(&["a", "b"]), &s(&["a", "c"]), &s(&[]), 3);
        assert_eq!(out.queries, s(&["a", "c", "b"]));
        assert!(round_robin_merge(&[], &[], &[], 9).queries.is_empty());
        assert!(round_robin_merge(&s(&["a"]), &[], &[], 0)
            .queries
            .is_empty());
    }

    fn entry(text: &str, sim: f64, source: EntrySource) -> RetrievedEntry {
        RetrievedEntry {
            text: text.into(),
            similarity: sim,
            source,
        }
    }

    #[test]
    fn merge_replaces_lowest_and_refills() {
        let orig: Vec<_> = (0..5)
            .map(|i| entry(&format!("o{i}"), i as f64 / 10.0, EntrySource::Original))
            .collect();
        let exp = vec![
            entry("o4", 0.9, EntrySource::Expanded),
            entry("x1", 0.05, EntrySource::Expanded),
        ];
        let out = merge_retrieval(&orig, &exp, 2).unwrap();
        let texts: Vec<&str> = out.iter().map(|e| e.text.as_str()).collect();
        // o0 and o1 are removed; o4 duplicate skipped; x1 inserted; o1 refills.
        assert_eq!(texts, vec!["o4", "o3", "o2", "o1", "x1"]);
        assert!(merge_retrieval(&orig, &exp, 6).is_err());
        assert_eq!(merge_retrieval(&orig, &[], 2).unwrap().len(), 5);
    }

    #[test]
    fn memories_file_sections() {
        let m =
            HostMemories::parse("## Caroline\n- likes hiking\n\n## Melanie\n- paints\n").unwrap();
        assert_eq!(m.speaker_1_name, "Caroline");
        assert_eq!(m.speaker_1_memories, "- likes hiking");
        assert_eq!(m.speaker_2_memories, "- paints");
        assert!(HostMemories::parse("oops\n## A").is_err());
        assert_eq!(HostMemories::parse("").unwrap(), HostMemories::default());
    }

    #[test]
    fn empty_selection_prompt_is_well_formed() {
        let ctx = format_injection(&AnchorSelection::default());
        assert_eq!(ctx.topic_block, NONE_AVAILABLE);
        let p = assemble_prompt("Where?", &HostMemories::default(), &ctx).unwrap();
        assert!(
            p.contains("Topic Summaries:\nNone available.\n\nEntity Profiles:\nNone available.")
        );
        assert!(
            p.contains("Structured Event Tuples & Traces:\nNone available.\n\nQuestion: Where?")
        );
        assert!(p.contains("10. The answer should be less than 5-6 words."));
        assert!(!p.contains('{'));
        assert!(assemble_prompt(" ", &HostMemories::default(), &ctx).is_err());
    }

    #[test]
    fn filled_text_is_not_rescanned() {
        let out = fill_placeholders("{a} {b}", &[("a", "{b}"), ("b", "x")]);
        assert_eq!(out, "{b} x");
        assert_eq!(fill_placeholders("{zz} {", &[]), "{zz} {");
    }
}
