mod common;

use std::collections::BTreeMap;

use anchorkit::build::{build_kb, BuildConfig, BuildMode, EPOCH_TIMESTAMP};
use anchorkit::kb::validate;
use anchorkit::Error;
use common::*;

#[test]
fn fixture_builds_cleanly() {
    let out = build_kb(
        &conversation(),
        &BuildConfig::default(),
        BuildMode::Default,
        &mock(),
        EPOCH_TIMESTAMP,
    )
    .unwrap();
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    assert!(validate(&out.kb).is_empty());
    assert!(out.kb.manifest.consolidated);
    assert!(out.kb.usage.total.prompt_chars > 0);
}

#[test]
fn small_batches_give_the_same_entities_and_events() {
    let big = build_fixture(BuildMode::Default, &BuildConfig::default());
    let small = build_fixture(BuildMode::Default, &small_batch_config());
    assert_eq!(big.entities, small.entities);
    assert_eq!(big.events, small.events);
}

#[test]
fn triple_mode_fills_all_three_stores() {
    let kb = build_fixture(BuildMode::Triple, &BuildConfig::default());
    assert!(!kb.entities.is_empty() && !kb.events.is_empty() && !kb.topics.is_empty());
    assert!(validate(&kb).is_empty());
}

#[test]
fn every_utterance_has_exactly_one_topic() {
    for cfg in [BuildConfig::default(), small_batch_config()] {
        let kb = build_fixture(BuildMode::Default, &cfg);
        let assignment = kb.topics.assignment();
        for seq in &kb.manifest.utterance_seq_ids {
            assert_eq!(assignment.get(seq).map(Vec::len), Some(1), "seq {seq}");
        }
    }
}

#[test]
fn recurring_events_share_a_trace() {
    let kb = build_fixture(BuildMode::Default, &BuildConfig::default());
    let mut by_trace: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &kb.events.events {
        *by_trace
            .entry(e.trace_id.as_deref().expect("linked"))
            .or_default() += 1;
    }
    assert!(by_trace.values().any(|&n| n > 1), "{by_trace:?}");
}

#[test]
fn missing_fixture_is_reported_per_span() {
    let provider = anchorkit::backend::MockProvider::empty();
    let err = build_kb(
        &conversation(),
        &BuildConfig::default(),
        BuildMode::Default,
        &provider,
        EPOCH_TIMESTAMP,
    );
    assert!(matches!(err, Err(Error::NoFixture { .. })), "{err:?}");
}
