use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use vpkit_bench::{embeddings, vowel};
use vpkit_core::{anonymize_embedding_set, anonymize_mcadams, lpc_analyze, roots_of_lpc, AnonPolicy, McAdamsConfig};

fn mcadams(c: &mut Criterion) {
    let audio = vowel(1.0);
    let mut group = c.benchmark_group("mcadams");
    for (name, cfg) in [
        ("alpha_0.8", McAdamsConfig::default()),
        ("radius_0.975", McAdamsConfig::with_radius_contraction()),
    ] {
        group.bench_function(BenchmarkId::new("one_second", name), |b| {
            b.iter(|| anonymize_mcadams(black_box(&audio), &cfg).unwrap())
        });
    }
    group.finish();

    let frame = &audio.samples()[4000..4320];
    let lpc = lpc_analyze(frame, 20).unwrap();
    c.bench_function("lpc_analyze_order_20", |b| b.iter(|| lpc_analyze(black_box(frame), 20).unwrap()));
    c.bench_function("roots_order_20", |b| b.iter(|| roots_of_lpc(black_box(&lpc.coeffs)).unwrap()));
}

fn embed(c: &mut Criterion) {
    let pool = embeddings(2000, 512, 1000, "p");
    let input = embeddings(200, 512, 40, "u");
    let policy = AnonPolicy::default();
    c.bench_function("embed_40_speakers_pool_2000", |b| {
        b.iter(|| anonymize_embedding_set(black_box(&input), &pool, &policy).unwrap())
    });
}

criterion_group!(benches, mcadams, embed);
criterion_main!(benches);
