use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qpgl_core::dual_green::{DualOperator, GreenOptions};
use qpgl_core::lattice::{enumerate_region, BlockStructure, Frequency, MultiIndex, RegionDescriptor};
use qpgl_core::potential::{ModelParams, PotentialModel};
use qpgl_core::Executor;

fn green_batch(c: &mut Criterion) {
    let bs = BlockStructure::new(vec![2]).unwrap();
    let v = PotentialModel::from_named_model("separable-cosine", &bs, &ModelParams::new(0.5)).unwrap();
    let op = DualOperator::new(vec![0.0], Frequency::new(vec![1.0, 0.618]).unwrap(), 0.05, v).unwrap();
    let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 6));
    let tasks = 32;
    let run = |exec: Executor| {
        exec.map(tasks, |i| {
            let o = op.with_theta(vec![0.013 * i as f64]);
            o.green_report(&region, 1.1, &GreenOptions::new(6, 0.5)).map(|r| r.op_norm).unwrap_or(f64::NAN)
        })
    };

    let mut group = c.benchmark_group("green_batch");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| black_box(run(Executor::Sequential))));
    let cores = std::thread::available_parallelism().map_or(2, |n| n.get()).max(2);
    let mut counts = vec![2, cores];
    counts.dedup();
    for workers in counts {
        group.bench_with_input(BenchmarkId::new("parallel", workers), &workers, |b, &w| {
            b.iter(|| black_box(run(Executor::Parallel(w))))
        });
    }
    group.finish();
}

criterion_group!(benches, green_batch);
criterion_main!(benches);
