//! On-disk knowledge base: one JSON file per store plus a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backend::{ModeTag, UsageRecord};
use crate::build::{BuildConfig, BuildMode};
use crate::entity::EntityStore;
use crate::error::{Error, Result};
use crate::event::{EventStore, EventTuple, TemporalTrace};
use crate::topic::TopicStore;

pub const FORMAT_VERSION: &str = "1.0";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENTITIES_FILE: &str = "entities.json";
pub const EVENTS_FILE: &str = "events.json";
pub const TRACES_FILE: &str = "traces.json";
pub const TOPICS_FILE: &str = "topics.json";
pub const USAGE_FILE: &str = "usage.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub conversation_id: String,
    pub build_mode: BuildMode,
    pub created_at: String,
    pub config: BuildConfig,
    pub consolidated: bool,
    /// Every seq_id of the source conversation, ascending.
    pub utterance_seq_ids: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub by_mode: BTreeMap<ModeTag, UsageRecord>,
    pub total: UsageRecord,
}

impl UsageSummary {
    pub fn record(&mut self, mode: ModeTag, usage: &UsageRecord) {
        self.by_mode.entry(mode).or_default().add(usage);
        self.total.add(usage);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorKb {
    pub manifest: Manifest,
    pub entities: EntityStore,
    pub events: EventStore,
    pub topics: TopicStore,
    pub usage: UsageSummary,
}

#[derive(Serialize, Deserialize)]
struct EventsFile {
    events: Vec<EventTuple>,
}

#[derive(Serialize, Deserialize)]
struct TracesFile {
    traces: Vec<TemporalTrace>,
}

/// Pretty JSON with 2-space indentation, keys sorted, trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Map is a BTreeMap here, so going through Value sorts every object.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn write(dir: &Path, name: &str, contents: String) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Write the six KB files into `dir`, creating it if needed.
pub fn save_kb(kb: &AnchorKb, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if !kb.manifest.consolidated {
        return Err(Error::State(
            "refusing to save an unconsolidated knowledge base".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, MANIFEST_FILE, to_sorted_json(&kb.manifest)?)?;
    write(dir, ENTITIES_FILE, to_sorted_json(&kb.entities)?)?;
    write(
        dir,
        EVENTS_FILE,
        to_sorted_json(&EventsFile {
            events: kb.events.events.clone(),
        })?,
    )?;
    write(
        dir,
        TRACES_FILE,
        to_sorted_json(&TracesFile {
            traces: kb.events.traces.clone(),
        })?,
    )?;
    write(dir, TOPICS_FILE, to_sorted_json(&kb.topics)?)?;
    write(dir, USAGE_FILE, to_sorted_json(&kb.usage)?)?;
    Ok(())
}

fn read<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn major(version: &str) -> &str {
    version.split('.').next().unwrap_or(version)
}

/// Load and validate a KB directory.
pub fn load_kb(dir: impl AsRef<Path>) -> Result<AnchorKb> {
    let dir = dir.as_ref();
    let manifest: Manifest = read(dir, MANIFEST_FILE)?;
    if major(&manifest.format_version) != major(FORMAT_VERSION) {
        return Err(Error::Version {
            found: manifest.format_version,
            supported: FORMAT_VERSION.to_string(),
        });
    }
    let entities: EntityStore = read(dir, ENTITIES_FILE)?;
    let events: EventsFile = read(dir, EVENTS_FILE)?;
    let traces: TracesFile = read(dir, TRACES_FILE)?;
    let topics: TopicStore = read(dir, TOPICS_FILE)?;
    let usage: UsageSummary = read(dir, USAGE_FILE)?;
    let kb = AnchorKb {
        manifest,
        entities,
        events: EventStore {
            events: events.events,
            traces: traces.traces,
        },
        topics,
        usage,
    };
    let problems = validate(&kb);
    if problems.is_empty() {
        Ok(kb)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Every broken cross-reference in `kb`, in a stable order.
pub fn validate(kb: &AnchorKb) -> Vec<String> {
    let mut problems = Vec::new();
    let seqs: BTreeSet<u64> = kb.manifest.utterance_seq_ids.iter().copied().collect();
    let check_seq = |what: String, seq: u64, problems: &mut Vec<String>| {
        if !seqs.contains(&seq) {
            problems.push(format!("{what} references unknown seq_id {seq}"));
        }
    };

    for p in kb.entities.iter() {
        for (key, attr) in &p.attributes {
            for &s in &attr.evidence_seq_ids {
                check_seq(
                    format!("entity {:?} attribute {key:?}", p.canonical_name),
                    s,
                    &mut problems,
                );
            }
        }
        for t in &p.timeline {
            check_seq(
                format!("entity {:?} timeline", p.canonical_name),
                t.seq_id,
                &mut problems,
            );
        }
    }

    let trace_ids: BTreeSet<&str> = kb
        .events
        .traces
        .iter()
        .map(|t| t.trace_id.as_str())
        .collect();
    let mut event_ids = BTreeSet::new();
    for e in &kb.events.events {
        if !event_ids.insert(e.event_id.as_str()) {
            problems.push(format!("duplicate event_id {}", e.event_id));
        }
        check_seq(
            format!("event {}", e.event_id),
            e.source_seq_id,
            &mut problems,
        );
        if let Some(t) = &e.trace_id {
            if !trace_ids.contains(t.as_str()) {
                problems.push(format!(
                    "event {} references unknown trace_id {t}",
                    e.event_id
                ));
            }
        }
    }
    for t in &kb.events.traces {
        for id in &t.event_ids {
            if !event_ids.contains(id.as_str()) {
                problems.push(format!(
                    "trace {} references unknown event_id {id}",
                    t.trace_id
                ));
            }
        }
    }
    for t in &kb.topics.topics {
        for &s in &t.utterance_seq_ids {
            check_seq(format!("topic {}", t.topic_id), s, &mut problems);
        }
    }
    problems
}
