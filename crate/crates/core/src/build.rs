//! Offline build: conversation → batches → extraction → stores → KB.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{
    complete_parsed, parse_entities, parse_events, parse_triple, render_prompt, CompletionProvider,
    CompletionRequest, EntityExtraction, EventExtraction, ModeTag, PromptInput, TripleExtraction,
    UsageRecord,
};
use crate::entity::{EntityStore, DEFAULT_COOCCURRENCE_THRESHOLD};
use crate::error::{Error, Result};
use crate::event::{EventStore, EventTuple, DEFAULT_DEDUP_TAU};
use crate::ingest::{make_batches, Batch, BatchKind, Conversation};
use crate::kb::{AnchorKb, Manifest, UsageSummary, FORMAT_VERSION};
use crate::par::{self, Exec};
use crate::topic::{
    clusters_from_extraction, identify_topics, merge_topic_batches, summarize_topic, TopicCluster,
    TopicStore,
};

/// How extraction calls are organized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildMode {
    /// One pipeline after another.
    #[default]
    Default,
    /// The three pipelines run concurrently.
    Parallel,
    /// One combined call per batch.
    Triple,
}

impl BuildMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BuildMode::Default => "default",
            BuildMode::Parallel => "parallel",
            BuildMode::Triple => "triple",
        }
    }

    fn exec(self) -> Exec {
        match self {
            BuildMode::Parallel => Exec::Parallel,
            _ => Exec::Sequential,
        }
    }
}

impl std::str::FromStr for BuildMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(BuildMode::Default),
            "parallel" => Ok(BuildMode::Parallel),
            "triple" => Ok(BuildMode::Triple),
            _ => Err(Error::Argument(format!("unknown build mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub batch_entity: usize,
    pub batch_event: usize,
    pub batch_topic: usize,
    /// Topic-batch overlap as a fraction of batch size.
    pub overlap: f64,
    pub tau: f64,
    pub cooccur_threshold: u32,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            batch_entity: 60,
            batch_event: 60,
            batch_topic: 150,
            overlap: 0.2,
            tau: DEFAULT_DEDUP_TAU,
            cooccur_threshold: DEFAULT_COOCCURRENCE_THRESHOLD,
        }
    }
}

/// Manifest timestamp for deterministic builds.
pub const EPOCH_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

/// Current UTC time in RFC 3339, second precision.
pub fn timestamp_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Result of a build, with the KB ready to save.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub kb: AnchorKb,
    pub warnings: Vec<String>,
    pub wall_ms: u64,
}

struct Pipeline<T> {
    value: T,
    usage: UsageRecord,
}

fn extract_all<T: Send>(
    batches: &[Batch],
    mode: ModeTag,
    provider: &dyn CompletionProvider,
    parse: fn(&str) -> Result<T>,
    exec: Exec,
) -> Result<Vec<(T, UsageRecord)>> {
    par::map(exec, batches, |batch| {
        let prompt = render_prompt(mode, PromptInput::Batch(batch))?;
        let request = CompletionRequest::new(mode, prompt, batch.span())?;
        complete_parsed(provider, &request, parse)
    })
    .into_iter()
    .collect()
}

fn entity_pipeline(
    batches: &[Batch],
    provider: &dyn CompletionProvider,
    exec: Exec,
) -> Result<Pipeline<EntityStore>> {
    let results = extract_all(batches, ModeTag::Entity, provider, parse_entities, exec)?;
    let parts: Vec<(EntityExtraction, UsageRecord)> = results;
    merge_entities(batches, parts.iter().map(|(x, u)| (x, *u)))
}

fn merge_entities<'a>(
    batches: &[Batch],
    parts: impl Iterator<Item = (&'a EntityExtraction, UsageRecord)>,
) -> Result<Pipeline<EntityStore>> {
    let mut store = EntityStore::new();
    let mut usage = UsageRecord::default();
    for (batch, (ex, u)) in batches.iter().zip(parts) {
        store.merge_extraction(ex, batch)?;
        usage.add(&u);
    }
    Ok(Pipeline {
        value: store,
        usage,
    })
}

fn merge_events<'a>(
    batches: &[Batch],
    parts: impl Iterator<Item = (&'a EventExtraction, UsageRecord)>,
    tau: f64,
) -> Result<Pipeline<EventStore>> {
    let mut store = EventStore::new();
    let mut usage = UsageRecord::default();
    for (batch, (ex, u)) in batches.iter().zip(parts) {
        let mut records = ex.events.clone();
        records.sort_by_key(|r| r.source_id);
        for rec in &records {
            store.ingest(&EventTuple::from_record(rec, batch)?, tau);
        }
        usage.add(&u);
    }
    Ok(Pipeline {
        value: store,
        usage,
    })
}

fn event_pipeline(
    batches: &[Batch],
    provider: &dyn CompletionProvider,
    tau: f64,
    exec: Exec,
) -> Result<Pipeline<EventStore>> {
    let results = extract_all(batches, ModeTag::Event, provider, parse_events, exec)?;
    merge_events(batches, results.iter().map(|(x, u)| (x, *u)), tau)
}

fn topic_pipeline(
    batches: &[Batch],
    provider: &dyn CompletionProvider,
    exec: Exec,
) -> Result<Pipeline<Vec<TopicCluster>>> {
    let results: Vec<(Vec<TopicCluster>, UsageRecord)> =
        par::map(exec, batches, |b| identify_topics(b, provider))
            .into_iter()
            .collect::<Result<_>>()?;
    let mut usage = UsageRecord::default();
    let mut clusters = Vec::new();
    for (c, u) in results {
        clusters.extend(c);
        usage.add(&u);
    }
    Ok(Pipeline {
        value: merge_topic_batches(clusters),
        usage,
    })
}

/// Summaries for every merged topic. Returns the store, usage and warnings.
fn summarize_topics(
    clusters: Vec<TopicCluster>,
    conversation: &Conversation,
    provider: &dyn CompletionProvider,
    exec: Exec,
) -> Result<(TopicStore, UsageRecord, Vec<String>)> {
    let outcomes = par::map(exec, &clusters, |c| {
        summarize_topic(c, &conversation.utterances, provider)
    });
    let mut store = TopicStore::default();
    let mut usage = UsageRecord::default();
    let mut warnings = Vec::new();
    for o in outcomes {
        let o = o?;
        usage.add(&o.usage);
        warnings.extend(o.warning);
        store.topics.push(o.cluster);
    }
    Ok((store, usage, warnings))
}

/// Run the full offline build.
///
/// `created_at` is recorded verbatim in the manifest.
pub fn build_kb(
    conversation: &Conversation,
    config: &BuildConfig,
    mode: BuildMode,
    provider: &dyn CompletionProvider,
    created_at: &str,
) -> Result<BuildOutput> {
    let start = Instant::now();
    let exec = mode.exec();
    let utts = &conversation.utterances;
    if utts.is_empty() {
        return Err(Error::EmptyInput("conversation has no utterances".into()));
    }
    let mut usage = UsageSummary::default();

    let (entities, events, topics) = match mode {
        BuildMode::Triple => {
            let batches = make_batches(utts, config.batch_entity, 0.0, BatchKind::EntityEvent)?;
            let results: Vec<(TripleExtraction, UsageRecord)> =
                extract_all(&batches, ModeTag::Triple, provider, parse_triple, exec)?;
            for (_, u) in &results {
                usage.record(ModeTag::Triple, u);
            }
            let none = UsageRecord::default();
            let entities =
                merge_entities(&batches, results.iter().map(|(x, _)| (&x.entities, none)))?;
            let events = merge_events(
                &batches,
                results.iter().map(|(x, _)| (&x.events, none)),
                config.tau,
            )?;
            let clusters = batches
                .iter()
                .zip(&results)
                .flat_map(|(b, (x, _))| clusters_from_extraction(&x.topics, b))
                .collect();
            let topics = Pipeline {
                value: merge_topic_batches(clusters),
                usage: none,
            };
            (entities, events, topics)
        }
        BuildMode::Default | BuildMode::Parallel => {
            let entity_batches =
                make_batches(utts, config.batch_entity, 0.0, BatchKind::EntityEvent)?;
            let event_batches =
                make_batches(utts, config.batch_event, 0.0, BatchKind::EntityEvent)?;
            let topic_batches =
                make_batches(utts, config.batch_topic, config.overlap, BatchKind::Topic)?;
            let (entities, (events, topics)) = par::join(
                exec,
                || entity_pipeline(&entity_batches, provider, exec),
                || {
                    par::join(
                        exec,
                        || event_pipeline(&event_batches, provider, config.tau, exec),
                        || topic_pipeline(&topic_batches, provider, exec),
                    )
                },
            );
            let (entities, events, topics) = (entities?, events?, topics?);
            usage.record(ModeTag::Entity, &entities.usage);
            usage.record(ModeTag::Event, &events.usage);
            usage.record(ModeTag::TopicId, &topics.usage);
            (entities, events, topics)
        }
    };

    let mut entity_store = entities.value;
    let event_store = events.value;
    entity_store.attach_event_mentions(&event_store.events);

    let (report, summarized) = par::join(
        exec,
        || {
            let mut store = entity_store;
            let report = store.consolidate(provider, config.cooccur_threshold, exec);
            (store, report)
        },
        || summarize_topics(topics.value, conversation, provider, exec),
    );
    let (entity_store, report) = report;
    let (topic_store, topic_usage, topic_warnings) = summarized?;
    usage.record(ModeTag::ProfileSummary, &report.usage);
    usage.record(ModeTag::TopicSummary, &topic_usage);

    let mut warnings = report.warnings;
    warnings.extend(topic_warnings);
    for w in &warnings {
        log::warn!("{w}");
    }

    let kb = AnchorKb {
        manifest: Manifest {
            format_version: FORMAT_VERSION.to_string(),
            conversation_id: conversation.conversation_id.clone(),
            build_mode: mode,
            created_at: created_at.to_string(),
            config: *config,
            consolidated: true,
            utterance_seq_ids: utts.iter().map(|u| u.seq_id).collect(),
        },
        entities: entity_store,
        events: event_store,
        topics: topic_store,
        usage,
    };
    Ok(BuildOutput {
        kb,
        warnings,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
