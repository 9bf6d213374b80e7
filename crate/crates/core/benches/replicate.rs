use aoisgd::engine::{replicate, TraceOptions};
use aoisgd::par::Execution;
use aoisgd::scenario::builtin;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_replicate(c: &mut Criterion) {
    let mut scenario = builtin("paper-experiment").unwrap().unwrap();
    scenario.config.slots = 500;
    let options = TraceOptions::default();
    let mut group = c.benchmark_group("replicate_8x500");
    group.sample_size(10);
    for mode in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| replicate(&scenario, 8, &options, mode).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_replicate);
criterion_main!(benches);
