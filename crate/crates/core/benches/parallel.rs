//! Sequential versus data-parallel execution of the two hot loops: linking a
//! corpus against a backend with fixed latency, and batch retrieval.

use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use linkpilot::llm::{BackendError, BackendReply, ChatBackend, CompletionRequest, LlmClient, RateLimit};
use linkpilot::pipeline::{Linker, PipelineConfig};
use linkpilot::prompts::TemplateSet;
use linkpilot::retrieval::{LexicalIndex, RetrievalQuery, CONTEXT_WINDOW};
use linkpilot::synth::fixture;

/// Answers "A" after a fixed delay, standing in for network latency.
struct SlowBackend(Duration);

impl ChatBackend for SlowBackend {
    fn send(&self, _: &CompletionRequest) -> Result<BackendReply, BackendError> {
        std::thread::sleep(self.0);
        Ok(BackendReply { text: "A".into(), metadata: Default::default() })
    }
}

fn threads() -> Vec<usize> {
    let n = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let mut t = vec![1, 4, n];
    t.dedup();
    t
}

fn link_corpus(c: &mut Criterion) {
    let fx = fixture(40, 36, 4, 11);
    let stores = fx.stores(true);
    let mut group = c.benchmark_group("link_corpus");
    group.sample_size(10);
    for t in threads() {
        let client = LlmClient::live(Arc::new(SlowBackend(Duration::from_millis(2))))
            .with_rate_limit(RateLimit { max_in_flight: t, ..RateLimit::default() });
        let cfg = PipelineConfig { parallelism: t, ..Default::default() };
        let linker = Linker::new(cfg, TemplateSet::builtin(), &stores, &client).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, _| {
            b.iter(|| linker.link_corpus(&fx.corpus))
        });
    }
    group.finish();
}

fn retrieve_many(c: &mut Criterion) {
    let fx = fixture(400, 400, 4, 12);
    let index = LexicalIndex::build(&fx.entities).unwrap();
    let queries: Vec<RetrievalQuery> = fx
        .corpus
        .iter()
        .flat_map(|d| d.mentions.iter().map(move |m| RetrievalQuery::for_mention(d, m, CONTEXT_WINDOW)))
        .collect();
    let mut group = c.benchmark_group("retrieve_many");
    for t in threads() {
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| index.retrieve_many(&queries, 10, t).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, link_corpus, retrieve_many);
criterion_main!(benches);
