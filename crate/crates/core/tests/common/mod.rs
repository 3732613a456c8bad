#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anchorkit::backend::{parse_entities, parse_topics, MockProvider};
use anchorkit::build::{build_kb, BuildConfig, BuildMode, EPOCH_TIMESTAMP};
use anchorkit::entity::EntityStore;
use anchorkit::event::{
    event_id_for, EventStore, EventTuple, EventType, Importance, WhenSpec, DEFAULT_DEDUP_TAU,
};
use anchorkit::ingest::{load_conversation, make_batches, BatchKind, Conversation, Utterance};
use anchorkit::kb::{save_kb, AnchorKb, Manifest, UsageSummary, FORMAT_VERSION};
use anchorkit::par::Exec;
use anchorkit::topic::{
    clusters_from_extraction, merge_topic_batches, template_summary, TopicStore,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

pub fn conversation() -> Conversation {
    load_conversation(fixtures_dir().join("conversation.json")).expect("fixture conversation")
}

pub fn mock() -> MockProvider {
    MockProvider::from_dir(fixtures_dir())
}

pub fn build_fixture(mode: BuildMode, config: &BuildConfig) -> AnchorKb {
    build_kb(&conversation(), config, mode, &mock(), EPOCH_TIMESTAMP)
        .expect("fixture build")
        .kb
}

/// Small batches so the fixture spans several entity, event and topic batches.
pub fn small_batch_config() -> BuildConfig {
    BuildConfig {
        batch_entity: 12,
        batch_event: 12,
        batch_topic: 12,
        ..BuildConfig::default()
    }
}

/// File name to bytes for a saved KB.
pub fn kb_bytes(kb: &AnchorKb) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().expect("tempdir");
    save_kb(kb, dir.path()).expect("save");
    std::fs::read_dir(dir.path())
        .expect("read dir")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("read"),
            )
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn utterances(n: usize) -> Vec<Utterance> {
    (0..n)
        .map(|i| Utterance {
            seq_id: i as u64,
            speaker: if i % 2 == 0 { "Ana" } else { "Ben" }.into(),
            content: format!("message number {i} about {}", WORDS[i % WORDS.len()]),
            session_id: format!("S{}", i / 8 + 1),
            timestamp: format!("2023-05-{:02}T10:{:02}:00", i / 8 + 1, i % 60),
        })
        .collect()
}

pub const NAMES: [&str; 6] = ["Ana", "Ben", "Cleo", "Dario", "Northwind", "Riverside"];
pub const WORDS: [&str; 12] = [
    "hiking", "painting", "concert", "python", "garden", "piano", "budget", "soccer", "novel",
    "bakery", "seattle", "physics",
];

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

pub fn event(
    seq: u64,
    who: &[&str],
    what: &str,
    when: WhenSpec,
    place: Option<&str>,
) -> EventTuple {
    EventTuple {
        event_id: event_id_for(seq, what),
        who: who.iter().map(|s| s.to_string()).collect(),
        what: what.into(),
        when,
        where_: place.map(String::from),
        outcome: None,
        description: format!("{} {what}", who.join(" and ")),
        event_type: EventType::Action,
        importance: Importance::Medium,
        source_seq_id: seq,
        recorded_at: "2023-05-10T12:00:00".into(),
        trace_id: None,
    }
}

pub fn random_when<R: Rng>(rng: &mut R) -> WhenSpec {
    let mut w = WhenSpec::default();
    match rng.random_range(0..4) {
        0 => {}
        1 => w.absolute = Some(pick(rng, &["1 May, 2023", "2 May, 2023", "June 2023"]).into()),
        2 => w.relative = Some(pick(rng, &["yesterday", "last week", "recently"]).into()),
        _ => w.recurrence = Some(pick(rng, &["every Saturday", "weekly"]).into()),
    }
    w
}

/// An unconstrained random event over a small vocabulary so collisions are common.
pub fn random_event<R: Rng>(rng: &mut R, seq: u64) -> EventTuple {
    let n_who = rng.random_range(0..3);
    let who: Vec<&str> = (0..n_who).map(|_| pick(rng, &NAMES)).collect();
    let n_what = rng.random_range(0..4);
    let what: Vec<&str> = (0..n_what).map(|_| pick(rng, &WORDS)).collect();
    let place = if rng.random_bool(0.5) {
        Some(pick(rng, &["Seattle", "home", "the park"]))
    } else {
        None
    };
    let mut e = event(seq, &who, &what.join(" "), random_when(rng), place);
    e.recorded_at = format!("2023-05-{:02}T09:00:00", rng.random_range(1..28));
    e
}

/// A random KB assembled through the public store APIs.
pub fn random_kb<R: Rng>(rng: &mut R, id: usize) -> AnchorKb {
    let n = rng.random_range(4..30);
    let utts = utterances(n);
    let provider = MockProvider::empty();

    let mut entities = EntityStore::new();
    for batch in make_batches(&utts, 10, 0.0, BatchKind::EntityEvent).expect("batches") {
        let (lo, hi) = batch.span().expect("non-empty");
        let records: Vec<_> = (0..rng.random_range(0..8))
            .map(|_| {
                let name = pick(rng, &NAMES);
                let attr = pick(rng, &["hobby", "city", "job"]);
                let mut rec = json!({
                    "source_id": rng.random_range(lo..=hi),
                    "entity_name": name,
                    "entity_type": pick(rng, &["person", "organization", "location", "concept"]),
                    "attributes": {attr: pick(rng, &WORDS)},
                    "relations": [{"target": pick(rng, &NAMES), "relation": pick(rng, &["knows", "works_at"])}],
                });
                if rng.random_bool(0.3) {
                    rec["status_changes"] = json!([{"attribute": "job", "from": null, "to": pick(rng, &WORDS)}]);
                }
                rec
            })
            .collect();
        let extraction =
            parse_entities(&json!({ "entities": records }).to_string()).expect("parse");
        entities
            .merge_extraction(&extraction, &batch)
            .expect("merge");
    }

    let mut events = EventStore::new();
    for _ in 0..rng.random_range(0..12) {
        let seq = rng.random_range(0..n as u64);
        let mut e = random_event(rng, seq);
        e.recorded_at = utts[seq as usize].timestamp.clone();
        events.ingest(&e, DEFAULT_DEDUP_TAU);
    }
    entities.attach_event_mentions(&events.events);
    entities.consolidate(&provider, 3, Exec::Sequential);

    let topics = random_topics(rng, &utts, 8, 0.25);
    let topics = TopicStore {
        topics: topics
            .into_iter()
            .map(|mut c| {
                let members: Vec<&Utterance> = utts
                    .iter()
                    .filter(|u| c.utterance_seq_ids.contains(&u.seq_id))
                    .collect();
                c.summary = Some(template_summary(&c, &members));
                c
            })
            .collect(),
    };

    AnchorKb {
        manifest: Manifest {
            format_version: FORMAT_VERSION.into(),
            conversation_id: format!("random-{id}"),
            build_mode: BuildMode::Default,
            created_at: EPOCH_TIMESTAMP.into(),
            config: BuildConfig::default(),
            consolidated: true,
            utterance_seq_ids: utts.iter().map(|u| u.seq_id).collect(),
        },
        entities,
        events,
        topics,
        usage: UsageSummary::default(),
    }
}

/// Random topic extractions over overlapping batches, merged across batches.
pub fn random_topics<R: Rng>(
    rng: &mut R,
    utts: &[Utterance],
    batch_size: usize,
    overlap: f64,
) -> Vec<anchorkit::topic::TopicCluster> {
    let mut clusters = Vec::new();
    for batch in make_batches(utts, batch_size, overlap, BatchKind::Topic).expect("batches") {
        let seqs: Vec<u64> = batch.utterances.iter().map(|u| u.seq_id).collect();
        let topics: Vec<_> = (0..rng.random_range(0..4))
            .map(|t| {
                let members: BTreeSet<u64> = (0..rng.random_range(0..seqs.len() + 2))
                    .map(|_| {
                        // Occasionally point outside the batch.
                        if rng.random_bool(0.05) {
                            seqs[0] + 1000
                        } else {
                            *seqs.choose(rng).expect("non-empty")
                        }
                    })
                    .collect();
                let kw: Vec<&str> = (0..rng.random_range(1..4))
                    .map(|_| pick(rng, &WORDS))
                    .collect();
                json!({
                    "topic_id": t,
                    "topic_label": format!("{} talk", kw[0]),
                    "topic_keywords": kw,
                    "utterance_indices": members,
                })
            })
            .collect();
        let extraction = parse_topics(&json!({ "topics": topics }).to_string()).expect("parse");
        clusters.extend(clusters_from_extraction(&extraction, &batch));
    }
    merge_topic_batches(clusters)
}

/// Independent top-k oracle: score everything, full stable sort, filter, truncate.
pub fn rerank_oracle(scored: &[(String, f64)], k: usize, sigma: f64) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, &str, f64)> = scored
        .iter()
        .enumerate()
        .map(|(i, (id, s))| (i, id.as_str(), *s))
        .collect();
    all.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .expect("finite similarity")
            .then_with(|| a.1.cmp(b.1))
    });
    all.into_iter()
        .filter(|x| x.2 >= sigma)
        .take(k)
        .map(|x| (x.0, x.2))
        .collect()
}

pub const TEMPORAL_QUERIES: [&str; 5] = [
    "what did they do yesterday",
    "what happened last week",
    "what did Ana do every Saturday",
    "what happened on 1 May, 2023",
    "anything interesting recently",
];
