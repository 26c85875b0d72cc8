use std::hint::black_box;

use balloc_bench::settled_state;
use balloc_core::graphs::conductance_exact;
use balloc_core::potentials::{certify_key_lemma, potential, potential_with_mode, PotentialMode};
use balloc_core::vectors::worst_case_vector;
use balloc_core::{ConditionParams, GraphKind, RegularGraph};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn potentials(c: &mut Criterion) {
    let mut group = c.benchmark_group("potential");
    for n in [256, 4096] {
        let state = settled_state(n, 20 * n as u64);
        group.bench_with_input(BenchmarkId::new("direct", n), &state, |b, s| b.iter(|| potential(black_box(s), 0.1).unwrap()));
        group.bench_with_input(BenchmarkId::new("log-space", n), &state, |b, s| {
            b.iter(|| potential_with_mode(black_box(s), 0.1, PotentialMode::LogSpace).unwrap())
        });
        let cond = ConditionParams::new(0.25, 0.5, 2.0).unwrap();
        let r = worst_case_vector(&cond, n).unwrap();
        group.bench_with_input(BenchmarkId::new("certify", n), &state, |b, s| {
            b.iter(|| certify_key_lemma(black_box(s), &r, &cond, 0.1).unwrap())
        });
    }
    group.finish();
}

fn conductance(c: &mut Criterion) {
    let g = RegularGraph::build(GraphKind::RandomRegular { d: 4, seed: 3 }, 20).unwrap();
    c.bench_function("conductance-exact-n20", |b| b.iter(|| conductance_exact(black_box(&g)).unwrap()));
}

criterion_group!(benches, potentials, conductance);
criterion_main!(benches);
