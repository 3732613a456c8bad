//! Extraction and answer-generation prompt templates.

use crate::error::{Error, Result};
use crate::ingest::{Batch, Utterance};
use crate::temporal::{parse_timestamp, weekday_name};

use super::ModeTag;

/// A template payload.
#[derive(Debug, Clone, Copy)]
pub enum PromptInput<'a> {
    /// Utterance batch for entity, event, topic identification and triple extraction.
    Batch(&'a Batch),
    /// Topic cluster for summary generation.
    Cluster {
        label: &'a str,
        keywords: &'a [String],
        utterances: &'a [Utterance],
    },
    /// Pre-rendered profile text for summary generation.
    Profile(&'a str),
}

/// Render the template for `mode` with the input block appended.
pub fn render_prompt(mode: ModeTag, input: PromptInput<'_>) -> Result<String> {
    match (mode, input) {
        (ModeTag::Entity | ModeTag::Event | ModeTag::Triple, PromptInput::Batch(batch)) => {
            let template = match mode {
                ModeTag::Entity => ENTITY_TEMPLATE_TEXT,
                ModeTag::Event => EVENT_TEMPLATE_TEXT,
                _ => TRIPLE_TEMPLATE_TEXT,
            };
            non_empty(&batch.utterances)?;
            Ok(format!(
                "{template}\n\n{}",
                segment_block(&batch.utterances)
            ))
        }
        (ModeTag::TopicId, PromptInput::Batch(batch)) => {
            non_empty(&batch.utterances)?;
            Ok(format!(
                "{TOPIC_ID_TEMPLATE_TEXT}\n\n{}",
                numbered_block(&batch.utterances)
            ))
        }
        (
            ModeTag::TopicSummary,
            PromptInput::Cluster {
                label,
                keywords,
                utterances,
            },
        ) => {
            non_empty(utterances)?;
            Ok(format!(
                "{TOPIC_SUMMARY_TEMPLATE_TEXT}\n\nTopic: {label}\nKeywords: {}\n\n{}",
                keywords.join(", "),
                numbered_block(utterances)
            ))
        }
        (ModeTag::ProfileSummary, PromptInput::Profile(text)) => {
            if text.trim().is_empty() {
                return Err(Error::Argument("empty profile payload".into()));
            }
            Ok(format!(
                "{PROFILE_SUMMARY_TEMPLATE_TEXT}\n\nProfile:\n{text}"
            ))
        }
        (mode, _) => Err(Error::Argument(format!(
            "payload does not match template {mode}"
        ))),
    }
}

fn non_empty(utts: &[Utterance]) -> Result<()> {
    if utts.is_empty() {
        return Err(Error::Argument(
            "cannot render a prompt for an empty batch".into(),
        ));
    }
    Ok(())
}

/// `--- Topic X --- / [timestamp, weekday] source_id.Speaker: message`, one header per session run.
fn segment_block(utts: &[Utterance]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for u in utts {
        if current != Some(u.session_id.as_str()) {
            out.push_str(&format!("--- Topic {} ---\n", u.session_id));
            current = Some(&u.session_id);
        }
        let weekday = parse_timestamp(&u.timestamp)
            .map(|dt| weekday_name(&dt))
            .unwrap_or("unknown");
        out.push_str(&format!(
            "[{}, {}] {}.{}: {}\n",
            u.timestamp, weekday, u.seq_id, u.speaker, u.content
        ));
    }
    out
}

/// `[session_id, timestamp] seq_id. SpeakerName: message`
fn numbered_block(utts: &[Utterance]) -> String {
    utts.iter()
        .map(|u| {
            format!(
                "[{}, {}] {}. {}: {}\n",
                u.session_id, u.timestamp, u.seq_id, u.speaker, u.content
            )
        })
        .collect()
}

pub(crate) const TOPIC_SUMMARY_TEMPLATE_TEXT: &str = r#"You are a **Topic Summary Writer**.

Read every utterance assigned to the topic below and write a structured summary
of the topic's arc across all sessions.

Output format (strict JSON):
{
  "narrative": "<1-3 paragraph synopsis>",
  "key_facts": ["<fact 1>", "<fact 2>"],
  "participants": ["<name>"],
  "temporal_span": "<earliest to latest date>",
  "sentiment": "<overall sentiment>",
  "importance": "<high|medium|low>",
  "extra_keywords": ["<kw>"]
}

RULES:
1. Key facts must be specific and verifiable from the utterances.
2. Do NOT invent information absent from the text."#;

pub(crate) const PROFILE_SUMMARY_TEMPLATE_TEXT: &str = r#"You are an **Entity Profile Summarizer**.

Write a compact natural-language summary (2-3 sentences) of the entity profile
below, covering its most confident attributes and its key relations.

Output format (strict JSON):
{
  "summary": "<summary text>"
}"#;

/// Answer-generation template with `{placeholder}` slots.
pub const ANSWER_TEMPLATE: &str = ANSWER_TEMPLATE_TEXT;

pub(crate) const ENTITY_TEMPLATE_TEXT: &str = r#"You are an Entity Extraction and Profiling Assistant.
Your task is to identify **all notable entities** mentioned in the conversation segments and extract structured profile information for each entity.

An entity is any object with persistence and importance, including:
- People: speakers, third parties mentioned by name or role
- Concepts/Topics: "reinforcement learning", "carbon neutrality", "risk management"
- Tasks/Projects: "write quarterly report", "develop XX module"
- Items/Events: "a specific book", "last week's team meeting"
- Locations/Organizations: "New York", "Google", "local hospital"

For each entity you identify, extract:
1. entity_name: A canonical, normalized name
2. entity_type: One of [person, concept, task, event, item, location, organization, other]
3. attributes: Key-value pairs of properties discovered in this segment
4. relations: Connections to other entities found in this segment
5. status_changes: Any state transitions observed
6. source_id: The sequence_number of the message where this entity info was found

Input format:
--- Topic X ---
[timestamp, weekday] source_id.SpeakerName: message
...

Output format (JSON):
{
  "entities": [
    {
      "source_id": <int>,
      "entity_name": "<canonical name>",
      "entity_type": "<type>",
      "attributes": { "<key>": "<value>", ... },
      "relations": [
        {"target": "<other entity name>", "relation": "<relationship type>"}
      ],
      "status_changes": [
        {"attribute": "<attr name>", "from": "<old value or null>", "to": "<new value>"}
      ]
    }
  ]
}

Important instructions:
1. Process messages strictly in ascending source_id order.
2. Extract ALL entities, even minor ones.
3. If the same entity appears in multiple messages, create separate entries (they will be merged later).
4. For people: always include their relationship to the speaker if mentioned.
5. For events: include temporal information (when it happened/will happen).
6. Preserve specific details: full names, exact dates, specific locations.
7. Do NOT invent information not present in the text."#;

pub(crate) const EVENT_TEMPLATE_TEXT: &str = r#"You are a **Structured Event Tuple Extractor**.

Your job is to read conversation segments and extract every notable event as a
**structured event tuple** with five canonical fields:
    (Who, What, When, Where, Outcome)

- Who: All participants / actors involved (list of names).
- What: The core action or verb phrase that defines the event.
- When: Temporal information - extract ALL available cues:
   absolute date/time, relative reference, duration, recurrence
- Where: Location or spatial context (if mentioned).
- Outcome: Result, consequence, state change, or next step (if mentioned).

Additionally, for each event, provide:
- description: A concise 1-2 sentence summary.
- event_type: One of [action, experience, state_change, plan, routine, social, achievement, other]
- importance: high | medium | low

Input format:
--- Topic X ---
[timestamp, weekday] source_id.SpeakerName: message
...

Output format (strict JSON):
{
  "events": [
    {
      "source_id": <int>,
      "description": "<concise 1-2 sentence summary>",
      "who": ["<person1>", "<person2>"],
      "what": "<core action / verb phrase>",
      "when": {
        "absolute": "<exact date/time or null>",
        "relative": "<relative reference or null>",
        "duration": "<duration or null>",
        "recurrence": "<recurrence pattern or null>"
      },
      "where": "<location or null>",
      "outcome": "<result / consequence or null>",
      "event_type": "<type>",
      "importance": "<high|medium|low>"
    }
  ]
}

IMPORTANT RULES:
1. Process messages strictly in ascending source_id order.
2. Extract ALL events (completeness > precision).
3. Preserve EXACT temporal details.
4. If the same event spans multiple messages, produce ONE entry.
5. For plans / future events, use event_type="plan".
6. For recurring activities, use event_type="routine".
7. Do NOT invent information absent from the text."#;

pub(crate) const TOPIC_ID_TEMPLATE_TEXT: &str = r#"You are a **Conversation Topic Identifier**.

Your job is to read a sequence of conversation utterances and assign each
utterance to a **topic**. Utterances about the same subject/theme should share
the same topic label, even if they are separated by other utterances.

Input format:
Each utterance is numbered sequentially:
[session_id, timestamp] seq_id. SpeakerName: message

Output format (strict JSON):
{
  "topics": [
    {
      "topic_id": <int>,
      "topic_label": "<short descriptive label, 3-8 words>",
      "topic_keywords": ["<kw1>", "<kw2>", "<kw3>"],
      "utterance_indices": [<seq_id_1>, <seq_id_2>, ...]
    }
  ]
}

RULES:
1. Every utterance MUST be assigned to exactly one topic.
2. Use descriptive, specific topic labels.
3. If the same subject is discussed in different sessions, they belong to the SAME topic.
4. Greetings, small talk -> "Casual conversation / greetings" topic.
5. A topic should have at least 2 utterances.
6. Aim for 5-15 topics per conversation.
7. Order topics by their first appearance in the conversation."#;

pub(crate) const TRIPLE_TEMPLATE_TEXT: &str = r#"You are a **Combined Entity, Event, and Topic Extractor**.

Your task is to read conversation segments and extract THREE types of information
in a SINGLE pass:

## Part 1: ENTITIES
Identify **all notable entities** mentioned in the conversation.
For each entity extract: entity_name, entity_type, attributes, relations, status_changes, source_id.

## Part 2: EVENTS
Extract every notable event as a **structured event tuple**:
who, what, when (absolute/relative/duration/recurrence), where, outcome, description, event_type, importance.

## Part 3: TOPIC ASSIGNMENTS
Assign each utterance to a **semantic topic**.
For each topic: topic_id, topic_label, topic_keywords, utterance_indices.

Input format:
--- Topic X ---
[timestamp, weekday] source_id.SpeakerName: message
...

Output format (strict JSON):
{
  "entities": [
    {"source_id": <int>, "entity_name": "...", "entity_type": "...",
     "attributes": {...}, "relations": [...], "status_changes": [...]}
  ],
  "events": [
    {"source_id": <int>, "description": "...", "who": [...], "what": "...",
     "when": {"absolute": ..., "relative": ..., "duration": ..., "recurrence": ...},
     "where": "...", "outcome": "...", "event_type": "...", "importance": "..."}
  ],
  "topics": [
    {"topic_id": <int>, "topic_label": "...", "topic_keywords": [...], "utterance_indices": [...]}
  ]
}

IMPORTANT RULES:
1. Process messages strictly in ascending source_id order.
2. Extract ALL entities and events.
3. Every utterance MUST be assigned to exactly one topic.
4. The output MUST contain "entities", "events", and "topics".
5. Do NOT invent information not present in the text."#;

pub(crate) const ANSWER_TEMPLATE_TEXT: &str = r#"You are an intelligent memory assistant tasked with retrieving
accurate information from conversation memories.

# CONTEXT:
You have access to memories from two speakers in a conversation.
These memories contain timestamped information that may be relevant.

You also have access to THREE additional structured knowledge sources:

1. **Topic Summaries** -- high-level summaries of conversation topics
2. **Entity Profiles** -- structured information about key entities
3. **Structured Event Tuples & Traces** -- (Who, What, When, Where, Outcome)

# INSTRUCTIONS:
1. Carefully analyze all provided memories from both speakers
2. Pay special attention to timestamps to determine the answer
3. Use Topic Summaries for the BIG PICTURE
4. Use Entity Profiles for entity-specific details
5. Use Structured Event Tuples for precise temporal information
6. Cross-reference across ALL sources for the most complete answer
7. If memories contain contradictory information, prioritize the most recent
8. Convert relative time references to specific dates
9. Focus only on the content of the memories
10. The answer should be less than 5-6 words.

# APPROACH (Think step by step):
1. First, examine all memories related to the question
2. Examine timestamps and content carefully
3. Check Topic Summaries for relevant high-level context
4. Check Entity Profiles for structured information
5. Check Event Tuples and Traces for temporal details
6. Synthesize information from all sources
7. Formulate a precise, concise answer based solely on the evidence

Memories for user {speaker_1_name}:
{speaker_1_memories}

Memories for user {speaker_2_name}:
{speaker_2_memories}

Topic Summaries:
{topic_context}

Entity Profiles:
{entity_context}

Structured Event Tuples & Traces:
{event_context}

Question: {question}

Answer:"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BatchKind;

    fn batch(n: usize) -> Batch {
        let utterances = (0..n)
            .map(|i| Utterance {
                seq_id: 10 + i as u64,
                speaker: "Caroline".into(),
                content: format!("message number {i}"),
                session_id: "S1".into(),
                timestamp: "2023-05-08".into(),
            })
            .collect();
        Batch {
            batch_index: 0,
            utterances,
            kind: BatchKind::EntityEvent,
        }
    }

    #[test]
    fn entity_prompt_numbers_messages_by_seq_id() {
        let p = render_prompt(ModeTag::Entity, PromptInput::Batch(&batch(2))).unwrap();
        assert!(p.starts_with(ENTITY_TEMPLATE_TEXT));
        assert!(p.contains("entity_name"));
        assert!(p.contains("--- Topic S1 ---\n"));
        assert!(p.contains("[2023-05-08, Monday] 10.Caroline: message number 0\n"));
        assert!(p.contains("[2023-05-08, Monday] 11.Caroline: message number 1\n"));
    }

    #[test]
    fn triple_prompt_has_combined_header() {
        let p = render_prompt(ModeTag::Triple, PromptInput::Batch(&batch(1))).unwrap();
        assert!(p.contains("Combined Entity, Event, and Topic Extractor"));
    }

    #[test]
    fn topic_prompt_uses_numbered_format() {
        let p = render_prompt(ModeTag::TopicId, PromptInput::Batch(&batch(1))).unwrap();
        assert!(p.contains("Every utterance MUST be assigned to exactly one topic."));
        assert!(p.ends_with("[S1, 2023-05-08] 10. Caroline: message number 0\n"));
    }

    #[test]
    fn empty_batch_rejected() {
        let err = render_prompt(ModeTag::Entity, PromptInput::Batch(&batch(0))).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn mismatched_payload_rejected() {
        assert!(render_prompt(ModeTag::ProfileSummary, PromptInput::Batch(&batch(1))).is_err());
        assert!(render_prompt(ModeTag::Entity, PromptInput::Profile("x")).is_err());
    }

    #[test]
    fn answer_template_has_all_placeholders() {
        for p in [
            "{speaker_1_name}",
            "{speaker_1_memories}",
            "{speaker_2_name}",
            "{speaker_2_memories}",
            "{topic_context}",
            "{entity_context}",
            "{event_context}",
            "{question}",
        ] {
            assert!(ANSWER_TEMPLATE.contains(p), "{p}");
        }
    }
}
