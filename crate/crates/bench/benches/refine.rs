use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use sigrefine_bench::wta;
use sigrefine_core::{generate_wta, refine_sequential, run_inproc, HashMode, Scheduler, WtaMonoid, WtaSpec};

fn sequential(c: &mut Criterion) {
    let mut group = c.benchmark_group("sequential");
    group.sample_size(10);
    for (states, rank) in [(200, 1), (200, 3), (1000, 3)] {
        let input = wta(states, rank, WtaMonoid::NatMax);
        group.throughput(Throughput::Elements(input.edge_count() as u64));
        for mode in [HashMode::Exact, HashMode::Hashed] {
            let id = BenchmarkId::new(format!("{mode:?}"), format!("n{states}-r{rank}"));
            group.bench_with_input(id, &input, |b, input| {
                b.iter(|| refine_sequential(input, mode).unwrap())
            });
        }
    }
    group.finish();
}

fn distributed(c: &mut Criterion) {
    let mut group = c.benchmark_group("dist-inproc");
    group.sample_size(10);
    let input = wta(1000, 3, WtaMonoid::NatMax);
    group.throughput(Throughput::Elements(input.edge_count() as u64));
    for workers in [1, 2, 4, 8] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| run_inproc(&input, w, Scheduler::Fifo).unwrap())
        });
    }
    group.finish();
}

fn generator(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate-wta");
    for states in [1000, 10_000] {
        let spec = WtaSpec {
            states,
            rank: 3,
            monoid: WtaMonoid::Word64Or,
            seed: 1,
        };
        group.throughput(Throughput::Elements(spec.transitions() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(states), &spec, |b, spec| {
            b.iter(|| generate_wta(spec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sequential, distributed, generator);
criterion_main!(benches);
