use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use podintro::boundary::{self, BoundaryConfig};
use podintro::chunker::{self, ChunkConfig};
use podintro::corpus::{self, LabeledDoc, Tolerance};
use podintro::scorer::{self, TrainConfig};
use podintro::synth::{self, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn noisy_plateau(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (b, e) = (n / 5, n / 3);
    (0..n)
        .map(|i| {
            let base = if (b..e).contains(&i) { 0.8 } else { 0.2 };
            (base + rng.random_range(-0.2..0.2f64)).clamp(0.0, 1.0)
        })
        .collect()
}

fn detect(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("detect");
    for n in [1_000, 5_000, 20_000] {
        let scores = noisy_plateau(n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| boundary::detect_scores("bench", black_box(s), &BoundaryConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn merge(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = ChunkConfig::default();
    let mut group = c.benchmark_group("merge");
    for n in [2_000, 20_000] {
        let windows: Vec<_> = chunker::split(n, &cfg)
            .into_iter()
            .map(|w| (w, (0..w.length).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &windows, |b, w| {
            b.iter(|| chunker::merge(n, black_box(w)).unwrap())
        });
    }
    group.finish();
}

fn train(c: &mut Criterion) {
    let cfg = SynthConfig {
        programs: 4,
        episodes_per_program: 5,
        ..SynthConfig::default()
    };
    let docs = synth::generate(&cfg).unwrap();
    let golds = corpus::resolve_corpus(&docs, Tolerance::default()).unwrap();
    let labeled: Vec<LabeledDoc> = docs
        .into_iter()
        .zip(golds)
        .map(|(d, g)| LabeledDoc::from_range(d, g.intro))
        .collect();
    let table = synth::random_embeddings(cfg.vocabulary(), 50, 0);
    let train_cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    c.bench_function("train/20docs_20epochs", |b| {
        b.iter(|| scorer::train_logistic(black_box(&labeled), &table, &train_cfg).unwrap())
    });
    let model = scorer::train_logistic(&labeled, &table, &train_cfg).unwrap().model;
    c.bench_function("score_document", |b| {
        b.iter(|| scorer::score_document(black_box(&labeled[0].doc), &model, &table, &ChunkConfig::default()).unwrap())
    });
}

criterion_group!(benches, detect, merge, train);
criterion_main!(benches);
