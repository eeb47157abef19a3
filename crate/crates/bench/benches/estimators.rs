use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fcm_core::{estimate_fcm_batch, online_init, HarmonicConfig, MeasurementBatch, OnlineSettings};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn batch(k: usize, t: usize, seed: u64) -> MeasurementBatch {
    let cfg = HarmonicConfig::new(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MeasurementBatch::new(cfg, random(cfg.p(), t, &mut rng), random(cfg.q(), t, &mut rng)).unwrap()
}

fn batch_estimate(c: &mut Criterion) {
    let mut g = c.benchmark_group("batch_estimate");
    g.sample_size(10);
    for k in [5, 20, 50] {
        let q = HarmonicConfig::new(k).q();
        let b = batch(k, 2 * q, 1);
        g.bench_with_input(BenchmarkId::from_parameter(k), &b, |bench, b| {
            bench.iter(|| estimate_fcm_batch(black_box(b)).unwrap())
        });
    }
    g.finish();
}

fn online_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("online_step");
    for k in [5, 20, 50] {
        let cfg = HarmonicConfig::new(k);
        let b = batch(k, 2 * cfg.q(), 2);
        let mut est = online_init(&b, OnlineSettings::default()).unwrap();
        let stream = batch(k, 256, 4);
        let mut j = 0;
        g.bench_function(BenchmarkId::from_parameter(k), |bench| {
            bench.iter(|| {
                let i = stream.currents().column(j % 256).into_owned();
                let v = stream.voltages().column(j % 256).into_owned();
                j += 1;
                est.step(&i, &v).unwrap();
            })
        });
    }
    g.finish();
}

criterion_group!(benches, batch_estimate, online_step);
criterion_main!(benches);
