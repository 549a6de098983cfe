//! Default rayon pool against a one-thread pool on the data-parallel hot paths.
//!
//! Build with `--no-default-features` to measure the plain sequential fallback.

use std::hint::black_box;

use advtext_core::codec::Alphabet;
use advtext_core::models::{evaluate, CharArch, ClassifierHandle};
use advtext_core::occlusion::{deviations, mine_htps_black};
use advtext_core::toydata::{self, Corpus};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn setup() -> (ClassifierHandle, Corpus) {
    let corpus = toydata::topic_corpus(32, 32, 3);
    let h = ClassifierHandle::build_char_cnn(
        "bench",
        corpus.classes.clone(),
        Alphabet::default(),
        512,
        &CharArch::desk(),
        1,
    )
    .unwrap();
    (h, corpus)
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let wide = rayon::ThreadPoolBuilder::new().build().unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("pool", wide), ("one-thread", one)]
}

fn bench(c: &mut Criterion) {
    let (h, corpus) = setup();
    let mut g = c.benchmark_group("parallel");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("evaluate-32", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| evaluate(&h, black_box(&corpus.test)).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("occlusion-doc", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| deviations(&h, black_box(&corpus.test[0])).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("mine-black-8", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| mine_htps_black(&h, black_box(&corpus.train[..8]), 10).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
