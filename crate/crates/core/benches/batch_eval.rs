//! Sequential vs rayon evaluation of a batch of papers.
//!
//! `instant` uses the heuristic judge; `latency` adds a fixed sleep per judge
//! call to stand in for a remote endpoint.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rwgrade_core::corpus::{parse_corpus, CitationSet};
use rwgrade_core::judge::{Judge, StubJudge, TaskId};
use rwgrade_core::par::Parallelism;
use rwgrade_core::pipeline::stub::{heuristic_judge, StubFeedback, StubGenerator, StubMode};
use rwgrade_core::pipeline::{run_many, Participants, RunConfig};

fn corpus() -> Vec<CitationSet> {
    let base = parse_corpus(include_str!("../tests/fixtures/corpus.json")).expect("fixture parses");
    (0..4)
        .flat_map(|copy| {
            base.iter().map(move |s| {
                let mut s = s.clone();
                s.main.id = format!("{}-{copy}", s.main.id);
                s
            })
        })
        .collect()
}

fn slow_judge(latency: Duration) -> Judge {
    StubJudge::new("yes")
        .task_default(TaskId::PositioningType, "1")
        .responder(move |_| {
            std::thread::sleep(latency);
            None
        })
        .build()
}

fn bench(c: &mut Criterion) {
    let sets = corpus();
    let gen = StubGenerator::new("bench", StubMode::CiteAll, 1);
    let config = RunConfig {
        iterations: 3,
        ..RunConfig::default()
    };
    // Judge calls are I/O bound, so the pool may exceed the core count.
    let jobs = 8;
    let judges = [
        ("instant", heuristic_judge(1)),
        ("latency", slow_judge(Duration::from_micros(200))),
    ];
    let mut group = c.benchmark_group("batch_eval");
    group.sample_size(10);
    for (label, judge) in &judges {
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            let judge = judge.clone().with_parallelism(mode);
            let who = Participants {
                generator: &gen,
                feedback: &StubFeedback,
                judge: &judge,
            };
            group.bench_with_input(BenchmarkId::new(*label, format!("{mode:?}")), &mode, |b, &mode| {
                b.iter(|| black_box(run_many(&sets, who, &config, jobs, mode)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
