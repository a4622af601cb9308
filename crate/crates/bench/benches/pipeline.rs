use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use svkit::backend::plda_llr;
use svkit::frontend::{fbank, plp};
use svkit::metrics::eer;
use svkit::nnet::{init_weights, ArchKind, Extractor, NetworkSpec};
use svkit::synth::{gen_plda_data, gen_toy_corpus, random_plda_model, PldaSynthSpec, ToyCorpusSpec};
use svkit::FeatureConfig;

fn features(c: &mut Criterion) {
    let corpus = gen_toy_corpus(&ToyCorpusSpec {
        num_speakers: 2,
        utts_per_speaker: 1,
        duration_s: 3.0,
        ..Default::default()
    })
    .unwrap();
    let wave = &corpus.waves[0];
    let cfg = FeatureConfig::default();
    c.bench_function("fbank 3 s", |b| b.iter(|| fbank(black_box(wave), &cfg).unwrap()));
    c.bench_function("plp 3 s", |b| b.iter(|| plp(black_box(wave), &cfg).unwrap()));
}

fn forward(c: &mut Criterion) {
    let corpus = gen_toy_corpus(&ToyCorpusSpec {
        num_speakers: 2,
        utts_per_speaker: 1,
        duration_s: 2.05,
        silence_s: 0.0,
        ..Default::default()
    })
    .unwrap();
    let feats = fbank(&corpus.waves[0], &FeatureConfig::default())
        .unwrap()
        .crop(0, 200)
        .unwrap();
    let mut group = c.benchmark_group("forward 200 frames");
    group.sample_size(10);
    for kind in [ArchKind::TdnnStandard, ArchKind::TdnnBig, ArchKind::Resnet34] {
        let spec = NetworkSpec::preset(kind, feats.cols(), 2).unwrap();
        let net = Extractor::new(&spec, &init_weights(&spec, 0).unwrap()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(kind), &feats, |b, f| {
            b.iter(|| net.embed(black_box(f)).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let model = random_plda_model(128, 64, 64, 1.0, 1.0, 0.5, 0);
    let data = gen_plda_data(&PldaSynthSpec {
        seed: 1,
        num_speakers: 2,
        utts_per_speaker: 1,
        model: model.clone(),
    });
    let (x, y) = (&data.embeddings[0], &data.embeddings[1]);
    c.bench_function("plda_llr d=128", |b| {
        b.iter(|| plda_llr(&model, black_box(x), black_box(y)).unwrap())
    });

    let n = 100_000;
    let labels: Vec<bool> = (0..n).map(|i| i % 10 == 0).collect();
    let scores: Vec<f64> = (0..n)
        .map(|i| ((i as f64 * 0.618_033_988_7).fract() - 0.5) + if labels[i] { 0.8 } else { 0.0 })
        .collect();
    c.bench_function("eer 100k trials", |b| {
        b.iter(|| eer(black_box(&scores), &labels).unwrap())
    });
}

criterion_group!(benches, features, forward, scoring);
criterion_main!(benches);
