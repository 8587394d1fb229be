use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use turnscope::{epoch_rates, moving_average, parse_edf, TurningParams};
use turnscope_bench::{noise, record_bytes};

fn bench_epoch_rates(c: &mut Criterion) {
    let x = noise("Fp2-F4", 600.0, 7);
    let mut g = c.benchmark_group("epoch_rates");
    g.throughput(Throughput::Elements(x.len() as u64));
    for d in [1, 4] {
        let p = TurningParams {
            delay: d,
            ..TurningParams::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(d), &p, |b, p| {
            b.iter(|| epoch_rates(black_box(&x), 1.0, p).unwrap())
        });
    }
    g.finish();
}

fn bench_moving_average(c: &mut Criterion) {
    // One night of 1 s epochs with a gap every 97 epochs.
    let values: Vec<Option<f64>> = (0..28_800)
        .map(|i| (i % 97 != 0).then(|| 0.3 + 0.05 * (i as f64 / 300.0).sin()))
        .collect();
    let mut g = c.benchmark_group("moving_average");
    g.throughput(Throughput::Elements(values.len() as u64));
    for len in [31, 301] {
        g.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, &len| {
            b.iter(|| moving_average(black_box(&values), len).unwrap())
        });
    }
    g.finish();
}

fn bench_parse_edf(c: &mut Criterion) {
    let bytes = record_bytes(600.0);
    let mut g = c.benchmark_group("parse_edf");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("two_channels_600s", |b| b.iter(|| parse_edf(black_box(&bytes)).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_epoch_rates, bench_moving_average, bench_parse_edf);
criterion_main!(benches);
