use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gcfg::par::Execution;
use gcfg::sampler::{generate_stack_with, SamplerConfig};
use gcfg::{
    metrics, AnalyticPredictor, GuidanceStack, MixtureWorld, NoisePredictor, NoiseSchedule,
};

fn stack() -> GuidanceStack {
    let world = Arc::new(MixtureWorld::quadrant());
    let oracle: Arc<dyn NoisePredictor> = Arc::new(AnalyticPredictor::new(
        world,
        Arc::new(NoiseSchedule::default()),
    ));
    GuidanceStack::unconditional(oracle.clone())
        .with_term(oracle.clone(), Some("left"), 1.0)
        .unwrap()
        .with_term(oracle, Some("top"), 1.0)
        .unwrap()
}

fn bench_generate(c: &mut Criterion) {
    let stack = stack();
    let mut group = c.benchmark_group("generate");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = SamplerConfig {
            num_inference_steps: 50,
            batch: 512,
            ..Default::default()
        };
        group.bench_with_input(
            BenchmarkId::new("ddim50x512", format!("{exec:?}")),
            &cfg,
            |b, cfg| b.iter(|| generate_stack_with(&stack, cfg, exec).unwrap()),
        );
    }
    group.finish();
}

fn bench_assignment(c: &mut Criterion) {
    let world = MixtureWorld::quadrant();
    let pts = gcfg::world::sample_data(&world, None, 20_000, 1).unwrap();
    let mut group = c.benchmark_group("assign");
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| gcfg::par::map_range(pts.len(), exec, |i| world.assign(&pts[i]).unwrap()))
        });
    }
    group.finish();
    c.bench_function("assignment_rate", |b| {
        b.iter(|| metrics::assignment_rate(&pts, &world, &[0, 1]).unwrap())
    });
}

criterion_group!(benches, bench_generate, bench_assignment);
criterion_main!(benches);
