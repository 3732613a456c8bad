//! Sequential vs rayon policy on the data-parallel hot paths.
//!
//! Without the `parallel` feature both arms run sequentially.

use std::hint::black_box;
use std::path::PathBuf;

use anchorkit::backend::{HashEmbedder, MockProvider};
use anchorkit::build::{build_kb, BuildConfig, BuildMode, EPOCH_TIMESTAMP};
use anchorkit::ingest::load_conversation;
use anchorkit::par::{self, Exec};
use anchorkit::retrieval::rerank;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const WORDS: [&str; 16] = [
    "hiking",
    "painting",
    "concert",
    "python",
    "garden",
    "piano",
    "budget",
    "soccer",
    "novel",
    "bakery",
    "seattle",
    "physics",
    "medllm",
    "conference",
    "sunset",
    "family",
];

fn candidates(n: usize) -> Vec<(String, String)> {
    (0..n)
        .map(|i| {
            let text: Vec<&str> = (0..24)
                .map(|j| WORDS[(i * 7 + j * 3) % WORDS.len()])
                .collect();
            (format!("c{i:06}"), text.join(" "))
        })
        .collect()
}

fn bench_rerank(c: &mut Criterion) {
    let mut group = c.benchmark_group("rerank");
    for n in [1_000, 10_000] {
        let cands = candidates(n);
        for (name, exec) in [
            ("sequential", Exec::Sequential),
            ("parallel", Exec::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(name, n), &cands, |b, cands| {
                b.iter(|| {
                    rerank(
                        &HashEmbedder,
                        "painting sunset at the conference",
                        black_box(cands),
                        5,
                        0.25,
                        exec,
                    )
                })
            });
        }
    }
    group.finish();
}

fn bench_pairwise_jaccard(c: &mut Criterion) {
    use anchorkit::text::{content_word_set, jaccard};
    let sets: Vec<_> = candidates(600)
        .iter()
        .map(|(_, t)| content_word_set(t))
        .collect();
    let mut group = c.benchmark_group("pairwise_jaccard");
    for (name, exec) in [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                par::map(exec, &sets, |a| {
                    sets.iter().map(|b| jaccard(a, b)).sum::<f64>()
                })
            })
        });
    }
    group.finish();
}

fn bench_build(c: &mut Criterion) {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let conv = load_conversation(fixtures.join("conversation.json")).expect("fixture");
    let provider = MockProvider::from_dir(&fixtures);
    let cfg = BuildConfig::default();
    let mut group = c.benchmark_group("build_fixture");
    for mode in [BuildMode::Default, BuildMode::Parallel] {
        group.bench_function(mode.as_str(), |b| {
            b.iter(|| build_kb(&conv, &cfg, mode, &provider, EPOCH_TIMESTAMP).expect("build"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_rerank, bench_pairwise_jaccard, bench_build);
criterion_main!(benches);
