use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qbattery_bench::fixture_schedule;
use qbattery_core::evolution::{run_schedule, schedule_propagator};
use qbattery_core::{BasisTag, QuantumState, SystemConfig};

fn dressed(c: &mut Criterion) {
    let mut group = c.benchmark_group("dressed_run_schedule");
    for n in [3, 5, 7] {
        let cfg = SystemConfig::new(n, 1.0, n + 2);
        let sched = fixture_schedule(&cfg, 8);
        let psi = QuantumState::ground_dressed(&cfg);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| run_schedule(&cfg, &psi, &sched).unwrap())
        });
    }
    group.finish();
}

fn full_space(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_propagator");
    for n in [2, 3, 4] {
        let cfg = SystemConfig::new(n, 1.0, 2 * n);
        let sched = fixture_schedule(&cfg, 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| schedule_propagator(&cfg, BasisTag::Full, &sched).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dressed, full_space);
criterion_main!(benches);
