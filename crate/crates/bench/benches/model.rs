use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use trackfill_core::model::{ModelConfig, SequencePredictor, Transformer};
use trackfill_core::synth::toy_corpus;
use trackfill_core::TokenId;

fn forward(c: &mut Criterion) {
    let m = Transformer::new(&ModelConfig::default()).unwrap();
    let corpus = toy_corpus(1);
    let seq: Vec<TokenId> = corpus[0].iter().copied().cycle().take(512).collect();
    let mut g = c.benchmark_group("transformer");
    g.sample_size(20);
    for len in [32, 128, 512] {
        g.bench_with_input(BenchmarkId::new("forward", len), &seq[..len], |b, s| b.iter(|| m.forward(black_box(s))));
        g.bench_with_input(BenchmarkId::new("loss_and_grad", len), &seq[..len], |b, s| {
            b.iter(|| m.loss_and_grad(black_box(s)))
        });
    }
    // incremental scoring through a session, one token at a time
    g.bench_function("session_128", |b| {
        b.iter(|| {
            let mut s = m.session();
            let mut last = Vec::new();
            for &t in &seq[..128] {
                s.push(t).unwrap();
                last = s.scores().unwrap();
            }
            last
        })
    });
    g.finish();
}

criterion_group!(benches, forward);
criterion_main!(benches);
