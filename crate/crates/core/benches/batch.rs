use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rta::batch::{is_parallel, map_seeds, map_seeds_sequential};
use rta::scenarios::ScenarioConfig;
use std::hint::black_box;

fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(format!(
        "{}/configs/{name}.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

fn seed_sweeps(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..32).collect();
    let mut group = c.benchmark_group("seed-sweep");
    group.sample_size(10);
    for name in ["surveillance", "delivery"] {
        let cfg = config(name);
        group.bench_with_input(BenchmarkId::new("sequential", name), &cfg, |b, cfg| {
            b.iter(|| {
                map_seeds_sequential(cfg, black_box(&seeds), |_, out| out.metrics.steps).unwrap()
            })
        });
        let label = if is_parallel() { "rayon" } else { "fallback" };
        group.bench_with_input(BenchmarkId::new(label, name), &cfg, |b, cfg| {
            b.iter(|| map_seeds(cfg, black_box(&seeds), |_, out| out.metrics.steps).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, seed_sweeps);
criterion_main!(benches);
