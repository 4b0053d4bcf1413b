use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qkdsim_bench::uniform;
use qkdsim_core::metrics::{kde_mode, quantile, remove_outliers_3sigma};
use qkdsim_core::secret_fraction;

fn quantiles(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantile");
    for n in [100, 10_000, 1_000_000] {
        let data = uniform(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| b.iter(|| quantile(d, 0.75)));
    }
    group.finish();
}

fn outliers_and_mode(c: &mut Criterion) {
    let data: Vec<f64> = uniform(5_000, 2).iter().map(|u| 360.0 + 100.0 * u).collect();
    c.bench_function("outliers_5k", |b| b.iter(|| remove_outliers_3sigma(&data)));
    c.bench_function("kde_mode_5k", |b| b.iter(|| kde_mode(&data)));
}

fn secret_fraction_grid(c: &mut Criterion) {
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.005).collect();
    c.bench_function("secret_fraction_grid", |b| {
        b.iter(|| grid.iter().map(|&q| secret_fraction(q).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, quantiles, outliers_and_mode, secret_fraction_grid);
criterion_main!(benches);
