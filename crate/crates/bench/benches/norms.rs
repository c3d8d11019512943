use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lpq_bench::{gaussian_grid, truncated_singular};
use lpq_core::{compute_mixed_norm, mollify, MixedExponents};

fn grid_norms(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_mixed_norm");
    for n in [32usize, 64, 128] {
        let f = gaussian_grid(n, n, 2);
        for (label, p, q) in [("time_outer", 3.0, 2.0), ("space_outer", 2.0, 3.0)] {
            let e = MixedExponents::new(p, q, 2).unwrap();
            group.bench_with_input(BenchmarkId::new(label, n), &f, |b, f| {
                b.iter(|| compute_mixed_norm(f, &e).unwrap())
            });
        }
    }
    group.finish();
}

fn mollified_eval(c: &mut Criterion) {
    let b = mollify(truncated_singular(100.0), 0.05);
    let mut out = [0.0; 2];
    c.bench_function("mollified_singular_eval", |bench| {
        bench.iter(|| {
            b.eval(black_box(0.5), black_box(&[0.2, -0.1]), &mut out);
            out
        })
    });
}

criterion_group!(benches, grid_norms, mollified_eval);
criterion_main!(benches);
