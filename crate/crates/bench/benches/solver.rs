use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lpq_bench::{planar_config, truncated_singular};
use lpq_core::{simulate, DiffusionSpec, DriftField, Simulation};

fn euler_maruyama(c: &mut Criterion) {
    let sigma = DiffusionSpec::identity();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let cases = [("zero", DriftField::Zero), ("singular_m100", truncated_singular(100.0))];
    for (name, drift) in &cases {
        let cfg = planar_config(1000, 1000);
        group.throughput(Throughput::Elements((cfg.n_steps * cfg.n_paths) as u64));
        group.bench_with_input(BenchmarkId::new("stored", name), drift, |b, drift| {
            b.iter(|| simulate(&sigma, drift, &cfg).unwrap())
        });
    }
    group.finish();
}

fn streaming_moment(c: &mut Criterion) {
    let sim = Simulation::new(
        DiffusionSpec::identity(),
        truncated_singular(100.0),
        planar_config(1000, 1000),
    )
    .unwrap();
    c.bench_function("streaming_increment_moment", |b| {
        b.iter(|| lpq_core::increment_moment(&sim, 2, 0.0, 1.0).unwrap())
    });
}

criterion_group!(benches, euler_maruyama, streaming_moment);
criterion_main!(benches);
