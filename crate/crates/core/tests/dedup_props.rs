mod common;

use anchorkit::event::{dedup_score, DedupOutcome, EventStore, WhenSpec, DEFAULT_DEDUP_TAU};
use common::*;
use proptest::prelude::*;

fn when_abs(s: &str) -> WhenSpec {
    WhenSpec {
        absolute: Some(s.into()),
        ..WhenSpec::default()
    }
}

proptest! {
    #[test]
    fn score_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_event(&mut r, 1);
        let b = random_event(&mut r, 2);
        let ab = dedup_score(&a, &b);
        prop_assert_eq!(ab, dedup_score(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn store_never_grows_past_input(seed in any::<u64>(), n in 0usize..20) {
        let mut r = rng(seed);
        let mut store = EventStore::new();
        for i in 0..n {
            store.ingest(&random_event(&mut r, i as u64), DEFAULT_DEDUP_TAU);
        }
        prop_assert!(store.len() <= n);
        let traced: usize = store.traces.iter().map(|t| t.event_ids.len()).sum();
        prop_assert_eq!(traced, store.len());
    }
}

#[test]
fn complete_event_scores_one_against_itself() {
    let e = event(
        3,
        &["Ana"],
        "baked bread",
        when_abs("1 May, 2023"),
        Some("home"),
    );
    assert_eq!(dedup_score(&e, &e), 1.0);
}

#[test]
fn equivalent_dates_match_in_any_spelling() {
    let a = event(1, &["Ana"], "baked bread", when_abs("1 May, 2023"), None);
    let b = event(2, &["ana"], "Baked the bread", when_abs("2023-05-01"), None);
    assert_eq!(dedup_score(&a, &b), 0.75);
}

// Above-threshold similarity is not transitive. A and B each miss a different
// field, so they only connect through C; arrival order decides the outcome.
#[test]
fn incremental_dedup_depends_on_arrival_order_outside_cliques() {
    let a = event(1, &["Ana"], "baked bread", when_abs("1 May, 2023"), None);
    let b = event(
        2,
        &["Ana"],
        "baked bread",
        WhenSpec::default(),
        Some("home"),
    );
    let c = event(
        3,
        &["Ana"],
        "baked bread",
        when_abs("1 May, 2023"),
        Some("home"),
    );
    assert_eq!(dedup_score(&a, &b), 0.5);
    assert_eq!(dedup_score(&a, &c), 0.75);

    let mut store = EventStore::new();
    for e in [&a, &b, &c] {
        store.ingest(e, DEFAULT_DEDUP_TAU);
    }
    assert_eq!(store.len(), 2);

    let mut store = EventStore::new();
    assert!(matches!(
        store.ingest(&c, DEFAULT_DEDUP_TAU),
        DedupOutcome::Inserted(0)
    ));
    assert!(matches!(
        store.ingest(&a, DEFAULT_DEDUP_TAU),
        DedupOutcome::Merged(0)
    ));
    assert!(matches!(
        store.ingest(&b, DEFAULT_DEDUP_TAU),
        DedupOutcome::Merged(0)
    ));
    assert_eq!(store.len(), 1);
}
