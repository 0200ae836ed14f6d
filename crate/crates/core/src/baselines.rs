//! Best-of-N and Feynman-Kac particle sampling with a running-max potential.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::evosearch::{initial_noise, Archive, GenerationStats, SearchResult};
use crate::rewards::{reward, RewardFn};
use crate::rng::{substream, substreams, Purpose};
use crate::samplers::{NfeLedger, Sampler};

/// `n` independent rollouts from Gaussian noise, ranked by reward.
///
/// Uses the same noise and rollout streams as generation 0 of
/// [`crate::evosearch::evosearch_run`], so the two agree exactly when the
/// search is reduced to a single generation.
pub fn best_of_n(
    n: usize,
    sampler: &Sampler,
    reward_fn: &RewardFn,
    seed: u64,
) -> Result<SearchResult> {
    if n == 0 {
        return Err(Error::config("n", "best-of-N needs at least one sample"));
    }
    let steps = sampler.num_steps();
    let x = initial_noise(n, sampler.dim(), seed);
    let mut ledger = NfeLedger::default();
    let mut rngs = substreams(seed, Purpose::Rollout, 0, n);
    let x0 = sampler.denoise(&x, steps, 0, None, &mut rngs, &mut ledger)?;
    let r = reward(reward_fn, &x0, &mut ledger);
    let mut archive = Archive::default();
    archive.record(&x0, &r, 0, 0, steps);
    let stats = vec![GenerationStats::from_rewards(
        0,
        steps,
        &r,
        vec![n],
        ledger.model_calls,
    )];
    SearchResult::new(archive.events, stats, ledger, n)
}

/// Exact posterior mean `E[x0 | x_t]` (Tweedie's estimate with the analytic
/// model). Does not touch the NFE ledger.
pub fn posterior_mean_x0(x_t: &Batch, t: usize, sampler: &Sampler) -> Result<Batch> {
    if t == 0 {
        return Ok(x_t.clone());
    }
    let output = sampler.model_output(x_t, t)?;
    sampler.x0_from_output(x_t, t, &output)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResamplingMode {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSamplingConfig {
    pub num_particles: usize,
    /// Steps between resampling events.
    pub resample_interval: usize,
    /// Potential temperature.
    pub lambda: f64,
    pub resampling: ResamplingMode,
}

impl ParticleSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles == 0 {
            return Err(Error::config("num_particles", "must be at least 1"));
        }
        if self.resample_interval == 0 {
            return Err(Error::config("resample_interval", "must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(
                "lambda",
                format!("{} must be positive", self.lambda),
            ));
        }
        Ok(())
    }
}

/// Ancestor indices drawn according to `weights` (need not be normalized).
pub fn resample_indices<R: Rng + ?Sized>(
    weights: &[f64],
    mode: ResamplingMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::input("resampling zero particles"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::input(
            "resampling weights must be finite and non-negative",
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::input("resampling weights are all zero"));
    }
    match mode {
        ResamplingMode::Multinomial => {
            let dist = WeightedIndex::new(weights).map_err(|e| Error::input(e.to_string()))?;
            Ok((0..n).map(|_| dist.sample(rng)).collect())
        }
        ResamplingMode::Systematic => {
            let step = total / n as f64;
            let offset = rng.gen::<f64>() * step;
            let mut out = Vec::with_capacity(n);
            let mut cum = weights[0];
            let mut j = 0;
            for i in 0..n {
                let u = offset + i as f64 * step;
                while u >= cum && j + 1 < n {
                    j += 1;
                    cum += weights[j];
                }
                out.push(j);
            }
            Ok(out)
        }
    }
}

pub fn resample<R: Rng + ?Sized>(
    states: &Batch,
    weights: &[f64],
    mode: ResamplingMode,
    rng: &mut R,
) -> Result<Batch> {
    if states.len() != weights.len() {
        return Err(Error::input("one weight per state is required"));
    }
    Ok(states.select(&resample_indices(weights, mode, rng)?))
}

/// Lockstep particles with periodic reward-weighted resampling.
///
/// Every `resample_interval` steps each particle's clean-sample estimate is
/// scored, its running maximum `M_i` updated, and the population resampled
/// with weights `exp(lambda * (M_i_new - M_i_prev))`, so that accumulated
/// weights telescope to `exp(lambda * M_i)`. The posterior-mean estimate
/// reuses the model output of the step it precedes and costs no extra NFE.
pub fn particle_sampling(
    cfg: &ParticleSamplingConfig,
    sampler: &Sampler,
    reward_fn: &RewardFn,
    seed: u64,
) -> Result<SearchResult> {
    cfg.validate()?;
    let n = cfg.num_particles;
    let steps = sampler.num_steps();
    let mut ledger = NfeLedger::default();
    let mut x = initial_noise(n, sampler.dim(), seed);
    let mut rngs = substreams(seed, Purpose::Rollout, 0, n);
    let mut running_max = vec![f64::NEG_INFINITY; n];
    let mut stats = Vec::new();
    let mut event = 0u64;

    for t in (1..=steps).rev() {
        let mut output = sampler.model_output(&x, t)?;
        let elapsed = steps - t;
        if elapsed > 0 && elapsed % cfg.resample_interval == 0 {
            let x0_hat = sampler.x0_from_output(&x, t, &output)?;
            let r_hat = reward(reward_fn, &x0_hat, &mut ledger);
            let mut log_w = Vec::with_capacity(n);
            let mut new_max = Vec::with_capacity(n);
            for (prev, r) in running_max.iter().zip(&r_hat) {
                let m = prev.max(*r);
                let base = if prev.is_finite() { *prev } else { 0.0 };
                log_w.push(cfg.lambda * (m - base));
                new_max.push(m);
            }
            let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut weights: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
            if !weights.iter().all(|w| w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
                log::warn!("particle weights degenerate at step {t}; resampling uniformly");
                weights = vec![1.0; n];
            }
            let mut rng = substream(seed, Purpose::Resample, event, 0);
            let ancestors = resample_indices(&weights, cfg.resampling, &mut rng)?;
            x = x.select(&ancestors);
            output = output.select(&ancestors);
            running_max = ancestors.iter().map(|&a| new_max[a]).collect();
            stats.push(GenerationStats::from_rewards(
                event as usize,
                t,
                &r_hat,
                vec![n],
                ledger.model_calls,
            ));
            event += 1;
        }
        x = sampler.step_with_output(&x, t, &output, &mut rngs, &mut ledger)?;
    }

    let r = reward(reward_fn, &x, &mut ledger);
    let mut archive = Archive::default();
    // all particles finish together
    archive.record(&x, &r, event as usize, ledger.model_calls, 0);
    stats.push(GenerationStats::from_rewards(
        event as usize,
        0,
        &r,
        vec![n],
        ledger.model_calls,
    ));
    SearchResult::new(archive.events, stats, ledger, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMixture;
    use crate::samplers::Process;
    use crate::schedules::NoiseSchedule;

    fn sampler() -> Sampler {
        Sampler::new(
            GaussianMixture::ring(8, 1.0, 0.04).unwrap(),
            Process::Diffusion(NoiseSchedule::linear(50, 2e-3, 0.4, 1.0).unwrap()),
        )
    }

    #[test]
    fn best_of_one() {
        let r = best_of_n(1, &sampler(), &RewardFn::Circle { radius: 2.0 }, 3).unwrap();
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.best_reward(), r.events[0].reward);
        assert_eq!(r.ledger.model_calls, 50);
    }

    #[test]
    fn best_of_n_constant_reward_keeps_first() {
        let r = best_of_n(10, &sampler(), &RewardFn::Constant(1.0), 0).unwrap();
        assert_eq!(r.ranked()[0].index, 0);
        assert_eq!(r.ledger.model_calls, 500);
    }

    #[test]
    fn resample_delta_and_systematic_permutation() {
        let states = Batch::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let mut rng = substream(0, Purpose::Resample, 0, 0);
        for mode in [ResamplingMode::Multinomial, ResamplingMode::Systematic] {
            let out = resample(&states, &[0.0, 0.0, 1.0, 0.0], mode, &mut rng).unwrap();
            assert!(out.rows().all(|r| r == [2.0]));
        }
        for _ in 0..100 {
            let idx = resample_indices(&[1.0; 7], ResamplingMode::Systematic, &mut rng).unwrap();
            assert_eq!(idx, (0..7).collect::<Vec<_>>());
        }
        assert!(resample_indices(&[0.0, 0.0], ResamplingMode::Systematic, &mut rng).is_err());
        assert!(resample_indices(&[1.0, -1.0], ResamplingMode::Multinomial, &mut rng).is_err());
        assert!(resample_indices(&[], ResamplingMode::Multinomial, &mut rng).is_err());
    }

    #[test]
    fn multinomial_counts_match_weights() {
        let weights = [0.1, 0.4, 0.2, 0.3];
        let mut counts = [0usize; 4];
        let mut rng = substream(1, Purpose::Resample, 0, 0);
        let draws = 100_000;
        let mut done = 0;
        while done < draws {
            for i in resample_indices(&weights, ResamplingMode::Multinomial, &mut rng).unwrap() {
                counts[i] += 1;
            }
            done += weights.len();
        }
        for (c, w) in counts.iter().zip(weights) {
            let p = *c as f64 / done as f64;
            let se = (w * (1.0 - w) / done as f64).sqrt();
            assert!((p - w).abs() < 4.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn systematic_counts_are_within_one_of_expectation() {
        let weights = [0.05, 0.5, 0.15, 0.3];
        let mut rng = substream(2, Purpose::Resample, 0, 0);
        for _ in 0..200 {
            let idx = resample_indices(&weights, ResamplingMode::Systematic, &mut rng).unwrap();
            for (j, w) in weights.iter().enumerate() {
                let c = idx.iter().filter(|&&i| i == j).count() as f64;
                assert!((c - 4.0 * w).abs() < 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn posterior_mean_examples() {
        let s = sampler();
        let x = Batch::from_rows(&[[0.3, 0.1]]).unwrap();
        assert_eq!(posterior_mean_x0(&x, 0, &s).unwrap(), x);

        let tight = Sampler::new(
            GaussianMixture::new(vec![1.0], vec![vec![1.0, -2.0]], vec![1e-12]).unwrap(),
            Process::Diffusion(NoiseSchedule::linear(50, 2e-3, 0.4, 1.0).unwrap()),
        );
        let xt = Batch::from_rows(&[[5.0, 5.0], [-3.0, 0.2]]).unwrap();
        let est = posterior_mean_x0(&xt, 30, &tight).unwrap();
        for row in est.rows() {
            assert!((row[0] - 1.0).abs() < 1e-6 && (row[1] + 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn posterior_mean_matches_component_enumeration() {
        // Independent route: enumerate components with Gaussian conjugacy
        // written out by hand here, not through the model's marginal code.
        let model = GaussianMixture::new(
            vec![0.6, 0.4],
            vec![vec![1.0, 0.5], vec![-1.0, -1.5]],
            vec![0.1, 0.4],
        )
        .unwrap();
        let schedule = NoiseSchedule::linear(50, 2e-3, 0.4, 1.0).unwrap();
        let s = Sampler::new(model.clone(), Process::Diffusion(schedule.clone()));
        let pts = [[0.2, -0.4], [1.5, 1.0], [-2.0, 0.3]];
        for t in [1, 10, 25, 49] {
            let a = schedule.alpha_bar(t);
            let xt = Batch::from_rows(&pts).unwrap();
            let est = posterior_mean_x0(&xt, t, &s).unwrap();
            for (p, e) in pts.iter().zip(est.rows()) {
                let mut lw = Vec::new();
                let mut means = Vec::new();
                for i in 0..2 {
                    let mu = model.mean(i);
                    let v = model.variances()[i];
                    let var = a * v + 1.0 - a;
                    let d2: f64 = (0..2).map(|j| (p[j] - a.sqrt() * mu[j]).powi(2)).sum();
                    lw.push(
                        model.weights()[i].ln()
                            - (2.0 * std::f64::consts::PI * var).ln()
                            - 0.5 * d2 / var,
                    );
                    let k = a.sqrt() * v / var;
                    means.push([
                        mu[0] + k * (p[0] - a.sqrt() * mu[0]),
                        mu[1] + k * (p[1] - a.sqrt() * mu[1]),
                    ]);
                }
                let mx = lw[0].max(lw[1]);
                let w: Vec<f64> = lw.iter().map(|l| (l - mx).exp()).collect();
                let z = w[0] + w[1];
                for j in 0..2 {
                    let expected = (w[0] * means[0][j] + w[1] * means[1][j]) / z;
                    assert!(
                        (e[j] - expected).abs() < 1e-6,
                        "t={t}: {} vs {expected}",
                        e[j]
                    );
                }
            }
        }
    }

    fn ps_cfg(n: usize, interval: usize, lambda: f64) -> ParticleSamplingConfig {
        ParticleSamplingConfig {
            num_particles: n,
            resample_interval: interval,
            lambda,
            resampling: ResamplingMode::Systematic,
        }
    }

    #[test]
    fn no_resampling_reduces_to_best_of_n() {
        let s = sampler();
        let f = RewardFn::Circle { radius: 2.0 };
        let ps = particle_sampling(&ps_cfg(32, 51, 10.0), &s, &f, 4).unwrap();
        let bon = best_of_n(32, &s, &f, 4).unwrap();
        assert_eq!(ps.ledger, bon.ledger);
        for (a, b) in ps.events.iter().zip(&bon.events) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.reward, b.reward);
        }
    }

    #[test]
    fn population_constant_and_budget() {
        let s = sampler();
        let f = RewardFn::Circle { radius: 2.0 };
        let ps = particle_sampling(&ps_cfg(40, 5, 10.0), &s, &f, 0).unwrap();
        assert_eq!(ps.events.len(), 40);
        assert_eq!(ps.ledger.model_calls, 40 * 50);
        // 9 resampling events (elapsed 5, 10, ..., 45) plus the final scoring
        assert_eq!(ps.ledger.reward_calls, 40 * 9 + 40);
        assert!(ps.generation_stats.iter().all(|g| g.pool_sizes == vec![40]));
    }

    #[test]
    fn resampling_copies_existing_states() {
        let s = sampler();
        let n = 16;
        let x = initial_noise(n, 2, 0);
        let mut rngs = substreams(0, Purpose::Rollout, 0, n);
        let xt = s
            .denoise(&x, 50, 20, None, &mut rngs, &mut NfeLedger::default())
            .unwrap();
        let mut rng = substream(0, Purpose::Resample, 0, 0);
        let weights: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let out = resample(&xt, &weights, ResamplingMode::Multinomial, &mut rng).unwrap();
        assert_eq!(out.len(), n);
        for row in out.rows() {
            assert!(xt.rows().any(|r| r == row));
        }
    }

    #[test]
    fn config_validation() {
        assert!(ps_cfg(0, 5, 1.0).validate().is_err());
        assert!(ps_cfg(4, 0, 1.0).validate().is_err());
        assert!(ps_cfg(4, 5, 0.0).validate().is_err());
        assert!(best_of_n(0, &sampler(), &RewardFn::Constant(0.0), 0).is_err());
    }
}
