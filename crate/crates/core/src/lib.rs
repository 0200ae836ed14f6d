//! Evolutionary test-time search over denoising trajectories.
//!
//! The crate pairs an analytic "pre-trained" generative model (an isotropic
//! Gaussian mixture with closed-form diffused score, epsilon prediction and
//! flow velocity) with three reward-guided inference-time search methods:
//!
//! - [`evosearch::evosearch_run`]: evolutionary search that evolves the
//!   initial noise and then intermediate denoising states along an evolution
//!   schedule,
//! - [`baselines::best_of_n`]: independent rollouts ranked by reward,
//! - [`baselines::particle_sampling`]: Feynman-Kac style lockstep particles
//!   resampled with a running-max potential.
//!
//! All three share the samplers in [`samplers`] and count model evaluations
//! in an [`NfeLedger`], so methods can be compared at matched compute.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod batch;
pub mod error;
pub mod evosearch;
pub mod metrics;
pub mod models;
pub mod rewards;
pub mod rng;
pub mod samplers;
pub mod schedules;
#[cfg(test)]
mod test_oracles;

pub use batch::Batch;
pub use error::{Error, Result};
pub use evosearch::{Event, EvoConfig, GenerationStats, SearchResult};
pub use models::{GaussianMixture, ModelKind};
pub use rewards::RewardFn;
pub use samplers::{NfeLedger, Process, Sampler};
pub use schedules::{EvolutionSchedule, FlowTimeGrid, NoiseSchedule, PopulationSchedule};
