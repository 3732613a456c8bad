mod common;

use std::collections::BTreeSet;

use anchorkit::backend::{Embedder, HashEmbedder};
use anchorkit::par::Exec;
use anchorkit::retrieval::{rerank, select_anchors, similarity, RetrievalConfig};
use common::*;
use proptest::prelude::*;

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..6).prop_map(|w| w.join(" "))
}

fn candidates_strategy() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((0u8..30, text_strategy()), 0..60).prop_map(|v| {
        v.into_iter()
            .map(|(id, t)| (format!("c{id:02}"), t))
            .collect()
    })
}

proptest! {
    #[test]
    fn rerank_matches_oracle(cands in candidates_strategy(), query in text_strategy(), k in 0usize..10, sigma in 0.0f64..1.0) {
        let q = HashEmbedder.embed(&query).ok();
        let scored: Vec<(String, f64)> = cands
            .iter()
            .map(|(id, t)| (id.clone(), similarity(&HashEmbedder, q.as_ref(), t)))
            .collect();
        let got = rerank(&HashEmbedder, &query, &cands, k, sigma, Exec::Sequential);
        prop_assert_eq!(&got, &rerank_oracle(&scored, k, sigma));
        prop_assert_eq!(got, rerank(&HashEmbedder, &query, &cands, k, sigma, Exec::Parallel));
    }

    #[test]
    fn raising_sigma_only_drops_results(cands in candidates_strategy(), query in text_strategy(), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let loose: BTreeSet<usize> = rerank(&HashEmbedder, &query, &cands, usize::MAX, lo, Exec::Sequential)
            .into_iter().map(|x| x.0).collect();
        let strict: BTreeSet<usize> = rerank(&HashEmbedder, &query, &cands, usize::MAX, hi, Exec::Sequential)
            .into_iter().map(|x| x.0).collect();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn smaller_k_is_a_prefix(cands in candidates_strategy(), query in text_strategy(), k in 0usize..10) {
        let big = rerank(&HashEmbedder, &query, &cands, k + 3, 0.0, Exec::Sequential);
        let small = rerank(&HashEmbedder, &query, &cands, k, 0.0, Exec::Sequential);
        prop_assert_eq!(&big[..small.len()], &small[..]);
    }
}

#[test]
fn selection_respects_per_module_k_and_sigma() {
    let mut r = rng(42);
    for i in 0..30 {
        let kb = random_kb(&mut r, i);
        for k in 0..4 {
            let cfg = RetrievalConfig::with_k(k);
            for q in ["Ana hiking", "Northwind python", "what happened last week"] {
                let sel = select_anchors(&kb, &HashEmbedder, q, &cfg, Exec::Parallel).unwrap();
                assert!(sel.entities.len() <= k && sel.topics.len() <= k && sel.events.len() <= k);
                assert!(sel.entities.iter().all(|e| e.similarity >= cfg.sigma));
                assert!(sel.topics.iter().all(|t| t.similarity >= cfg.sigma));
                assert!(sel
                    .events
                    .iter()
                    .all(|e| e.temporal_reserved || e.similarity >= cfg.sigma));
            }
        }
    }
}

#[test]
fn unconsolidated_kb_is_rejected() {
    let mut kb = random_kb(&mut rng(7), 0);
    kb.manifest.consolidated = false;
    let err = select_anchors(
        &kb,
        &HashEmbedder,
        "Ana",
        &RetrievalConfig::default(),
        Exec::Sequential,
    );
    assert!(matches!(err, Err(anchorkit::Error::State(_))));
}

#[test]
fn fixture_query_ranks_the_named_person_first() {
    let kb = build_fixture(anchorkit::build::BuildMode::Default, &Default::default());
    let sel = select_anchors(
        &kb,
        &HashEmbedder,
        "Caroline MedLLM",
        &RetrievalConfig::default(),
        Exec::Parallel,
    )
    .unwrap();
    assert_eq!(sel.entities[0].profile.canonical_name, "Caroline");
}
