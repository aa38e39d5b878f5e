use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nah_core::cesm::{build_dictionary, cesm_solve, EsmConfig};
use nah_core::eval::finetune_sample;
use nah_core::metrics::{Method, NccMode};
use nah_core::model::{CvUnet, UnetConfig};
use nah_core::propagate::{build_propagator_with, PropagatorCache};
use nah_core::sim::make_ood_family;
use nah_core::train::FinetuneConfig;
use nah_core::{Exec, NahConfig, Split};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn propagator_assembly(c: &mut Criterion) {
    let cfg = NahConfig::default();
    let omega = 2.0 * std::f64::consts::PI * 700.0;
    let mut g = c.benchmark_group("propagator_assembly");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_propagator_with(black_box(&cfg), omega, exec).unwrap())
        });
    }
    g.finish();
}

fn finetune_batch(c: &mut Criterion) {
    let cfg = NahConfig::default();
    let ds = make_ood_family(&cfg, 3, 4, Some(4), Exec::Parallel).unwrap();
    let samples = ds.samples_in(Split::Test);
    let net = CvUnet::init(UnetConfig::default(), 0).unwrap();
    let ft = FinetuneConfig {
        epochs: 5,
        ..FinetuneConfig::default()
    };
    let cache = PropagatorCache::new();
    let mut g = c.benchmark_group("finetune_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map(&samples, |s| {
                    finetune_sample(&net, s, &cfg, &ft, &cache, Method::Finetuned, NccMode::Modulus)
                        .unwrap()
                        .record
                })
            })
        });
    }
    g.finish();
}

fn cesm_sweep(c: &mut Criterion) {
    let cfg = NahConfig::default();
    let esm = EsmConfig {
        fista_iters: 200,
        fista_tol: 0.0,
        ..EsmConfig::default()
    };
    let ds = make_ood_family(&cfg, 4, 1, Some(1), Exec::Parallel).unwrap();
    let m = ds.samples[0].measurement();
    let dict = build_dictionary(&cfg, &esm, m.omega(), Exec::Parallel).unwrap();
    let p = m.physical_pressure();
    let mut g = c.benchmark_group("cesm_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| cesm_solve(black_box(&p), &dict, &cfg, &esm, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().measurement_time(Duration::from_secs(5)).warm_up_time(Duration::from_secs(1));
    targets = propagator_assembly, finetune_batch, cesm_sweep
}
criterion_main!(benches);
