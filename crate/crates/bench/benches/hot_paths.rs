//! Hot-path benchmarks: the exact-split pusher against the RK4 oracle, the
//! spectral Poisson solve, charge deposition, and the gyroaverage.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use ghl_bench::{particle_cloud, smooth_rho};
use ghl_core::characteristics::{push_full, IntegratorSettings, PhasePoint};
use ghl_core::fields::{FieldConfig, FieldSpec};
use ghl_core::gyroaverage::{gyroaverage, GyroQuadrature, VelocityFunction};
use ghl_core::poisson::{deposit_charge, solve_poisson, Grid3};
use ghl_core::{UnitAxis, Vec3};

fn bench_pushers(c: &mut Criterion) {
    let eps = 0.05;
    let cfg = FieldConfig::new(
        eps,
        UnitAxis::e1(),
        None,
        FieldSpec::Gaussian {
            amplitude: Vec3::new(0.1, 0.05, 0.0),
            center: Vec3::ZERO,
            width: 2.0,
        },
        FieldSpec::Zero,
        None,
    )
    .unwrap();
    let p = PhasePoint::new(Vec3::new(0.2, 0.1, 0.0), Vec3::new(0.3, 0.7, -0.2));
    let dt = 2.0 * std::f64::consts::PI * eps / 64.0;

    let mut group = c.benchmark_group("push_full_t1");
    group.bench_function("exact_split", |b| {
        let s = IntegratorSettings::exact_split(dt).unwrap();
        b.iter(|| push_full(black_box(p), &cfg, 0.0, 1.0, &s).unwrap())
    });
    group.bench_function("rk4_oracle", |b| {
        let s = IntegratorSettings::rk4(dt, 64).unwrap();
        b.iter(|| push_full(black_box(p), &cfg, 0.0, 1.0, &s).unwrap())
    });
    group.finish();
}

fn bench_poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson_solve");
    for n in [16usize, 32] {
        let grid = Grid3::new([n, n, n], [1.0, 1.0, 1.0]).unwrap();
        let rho = smooth_rho(grid);
        group.throughput(Throughput::Elements(grid.node_count() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &rho, |b, rho| {
            b.iter(|| solve_poisson(black_box(rho)))
        });
    }
    group.finish();
}

fn bench_deposit(c: &mut Criterion) {
    let grid = Grid3::new([16, 16, 16], [1.0, 1.0, 1.0]).unwrap();
    let (xs, _, ws) = particle_cloud(100_000, 7);
    let mut group = c.benchmark_group("deposit_charge");
    group.throughput(Throughput::Elements(xs.len() as u64));
    group.bench_function("cic_100k", |b| {
        b.iter(|| deposit_charge(black_box(&xs), black_box(&ws), grid))
    });
    group.finish();
}

fn bench_gyroaverage(c: &mut Criterion) {
    let g = VelocityFunction::new(
        |_, v: Vec3| (-(v - Vec3::new(0.0, 0.5, 0.0)).norm2()).exp(),
        6.0,
    );
    let quad = GyroQuadrature::new(64).unwrap();
    c.bench_function("gyroaverage_64", |b| {
        b.iter(|| {
            gyroaverage(
                black_box(&g),
                Vec3::ZERO,
                black_box(Vec3::new(0.2, 0.8, -0.3)),
                UnitAxis::e1(),
                quad,
            )
        })
    });
}

criterion_group!(
    benches,
    bench_pushers,
    bench_poisson,
    bench_deposit,
    bench_gyroaverage
);
criterion_main!(benches);
