use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use qkdsim_bench::preset_days;
use qkdsim_core::{aggregate, run_with, RunOptions};

fn opts() -> RunOptions {
    RunOptions {
        record_key_material: false,
        check_invariants: false,
    }
}

fn run_preset(c: &mut Criterion) {
    let s = preset_days(1.0);
    let mut group = c.benchmark_group("engine");
    group.sample_size(20);
    group.bench_function("preset_1d", |b| b.iter(|| run_with(&s, &opts())));
    let checked = RunOptions {
        check_invariants: true,
        ..opts()
    };
    group.bench_function("preset_1d_checked", |b| b.iter(|| run_with(&s, &checked)));
    group.finish();
}

fn aggregate_preset(c: &mut Criterion) {
    let r = run_with(&preset_days(10.0), &opts());
    c.bench_function("aggregate_10d", |b| {
        b.iter_batched(|| r.clone(), |r| aggregate(&r), BatchSize::LargeInput)
    });
}

criterion_group!(benches, run_preset, aggregate_preset);
criterion_main!(benches);
