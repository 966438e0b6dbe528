//! Sequential vs parallel execution of the pool build, the encoder and the
//! decoder. Build with `--no-default-features` to see the sequential-only
//! numbers for both labels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fic_core::{
    decode, encode, DecodeSettings, DomainPool, EncoderConfig, Execution, GrayImage, PoolSelection,
};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn scene(n: usize) -> GrayImage {
    GrayImage::from_fn(n, n, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let v = 128.0
            + 60.0 * (x * 0.07).sin() * (y * 0.05).cos()
            + 30.0 * ((x + 2.0 * y) * 0.21).sin();
        v.clamp(0.0, 255.0) as u8
    })
    .expect("non-empty")
}

fn pool(c: &mut Criterion) {
    let img = scene(256);
    let mut group = c.benchmark_group("pool_build");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| DomainPool::build(&img, 8, 4, PoolSelection::TopK(256), exec).unwrap())
        });
    }
    group.finish();
}

fn encoder(c: &mut Criterion) {
    let img = scene(128);
    let mut group = c.benchmark_group("encode");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = EncoderConfig {
            execution: exec,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| encode(&img, cfg).unwrap())
        });
    }
    group.finish();
}

fn decoder(c: &mut Criterion) {
    let img = scene(256);
    let (code, _) = encode(&img, &EncoderConfig::default()).unwrap();
    let mut group = c.benchmark_group("decode");
    for (name, exec) in MODES {
        let settings = DecodeSettings {
            execution: exec,
            convergence_epsilon: 0.0,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &settings, |b, s| {
            b.iter(|| decode(&code, s).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pool, encoder, decoder);
criterion_main!(benches);
