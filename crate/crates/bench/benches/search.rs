use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evosearch_bench::{circle, diffusion_sampler};
use evosearch_core::baselines::{
    best_of_n, particle_sampling, ParticleSamplingConfig, ResamplingMode,
};
use evosearch_core::evosearch::evosearch_run;
use evosearch_core::{EvoConfig, EvolutionSchedule, PopulationSchedule};

// All three methods at matched budgets of roughly 2k and 20k model calls.
fn methods(c: &mut Criterion) {
    let s = diffusion_sampler();
    let f = circle();
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    for k in [8usize, 83] {
        let evolution = EvolutionSchedule::new(vec![50, 40, 30, 20, 10]).unwrap();
        let population = PopulationSchedule::doubled_start(k, evolution.len()).unwrap();
        let mut cfg = EvoConfig::with_defaults(evolution, population);
        cfg.final_k = 64.min(k);
        let budget = cfg.planned_nfe();
        let particles = budget as usize / 50;
        group.bench_with_input(BenchmarkId::new("evosearch", budget), &cfg, |b, cfg| {
            b.iter(|| evosearch_run(cfg, &s, &f, 0).unwrap())
        });
        group.bench_with_input(
            BenchmarkId::new("best_of_n", budget),
            &particles,
            |b, &n| b.iter(|| best_of_n(n, &s, &f, 0).unwrap()),
        );
        let ps = ParticleSamplingConfig {
            num_particles: particles,
            resample_interval: 1,
            lambda: 10.0,
            resampling: ResamplingMode::Systematic,
        };
        group.bench_with_input(
            BenchmarkId::new("particle_sampling", budget),
            &ps,
            |b, ps| b.iter(|| particle_sampling(ps, &s, &f, 0).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, methods);
criterion_main!(benches);
