//! Sequential vs parallel execution of the data-parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use langdiar::backend::{train_backend, BackendModel, ProjectionChain, ScorerKind};
use langdiar::corpus::{synth_corpus, CorpusSpec, SynthUtterance};
use langdiar::diarize::{ahc_vectors, divergence_contour};
use langdiar::embedding::{labeled_windows, sliding_extract_with, ExtractorKind, StatPool};
use langdiar::eval::score_batch;
use langdiar::features::energy_vad;
use langdiar::Parallelism;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn setup() -> (Vec<SynthUtterance>, BackendModel) {
    let corpus = synth_corpus(&CorpusSpec::ttsf().with_seed(1), 8, Parallelism::default()).unwrap();
    let (mut xs, mut ls) = (Vec::new(), Vec::new());
    for u in &corpus {
        let v = energy_vad(&u.features, 0.06).unwrap().voiced().unwrap();
        let (x, l) = labeled_windows(&StatPool, &v, &u.reference, &["P".into(), "S".into()], 50, 25).unwrap();
        xs.extend(x);
        ls.extend(l);
    }
    let model = train_backend(&xs, &ls, &ProjectionChain::default(), 50, ExtractorKind::StatPool).unwrap();
    (corpus, model)
}

fn stages(c: &mut Criterion) {
    let (corpus, model) = setup();
    let scorer = model.scorer(ScorerKind::Gplda).unwrap();
    let seq = &corpus[0].features;
    let emb = sliding_extract_with(&StatPool, seq, 50, 4, Parallelism::default()).unwrap();
    let projected = model.projection.apply_all(&emb.vectors, Parallelism::default()).unwrap();
    let pairs: Vec<_> = corpus.iter().map(|u| (u.reference.clone(), u.reference.clone())).collect();

    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    for (name, par) in MODES {
        g.bench_with_input(BenchmarkId::new("sliding_extract", name), &par, |b, &par| {
            b.iter(|| sliding_extract_with(&StatPool, black_box(seq), 50, 1, par).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("distance_matrix_ahc", name), &par, |b, &par| {
            b.iter(|| ahc_vectors(black_box(&projected), &scorer, 2, par).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("contour", name), &par, |b, &par| {
            b.iter(|| divergence_contour(black_box(seq), &StatPool, &model.projection, &scorer, 50, par).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("synth_corpus", name), &par, |b, &par| {
            b.iter(|| synth_corpus(&CorpusSpec::ttsf(), 16, par).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("score_batch", name), &par, |b, &par| {
            b.iter(|| score_batch(black_box(&pairs), 0.0, par).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
