//! Shared fixtures for the benchmarks.

use evosearch_core::{FlowTimeGrid, GaussianMixture, NoiseSchedule, Process, RewardFn, Sampler};

/// The eight-mode ring used throughout the experiments.
pub fn ring() -> GaussianMixture {
    GaussianMixture::ring(8, 1.0, 0.04).expect("valid ring")
}

pub fn diffusion_sampler() -> Sampler {
    Sampler::new(
        ring(),
        Process::Diffusion(NoiseSchedule::linear(50, 2e-3, 0.4, 0.3).expect("valid schedule")),
    )
}

pub fn flow_sampler() -> Sampler {
    Sampler::new(
        ring(),
        Process::Flow(FlowTimeGrid::uniform(50, 0.5).expect("valid grid")),
    )
}

pub fn circle() -> RewardFn {
    RewardFn::Circle { radius: 2.0 }
}
