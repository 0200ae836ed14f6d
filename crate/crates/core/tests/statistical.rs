//! Distributional properties checked against closed-form or direct-sampling
//! oracles with fixed seeds.

use evosearch_core::baselines::{
    best_of_n, particle_sampling, ParticleSamplingConfig, ResamplingMode,
};
use evosearch_core::evosearch::{initial_noise, mutate_initial_noise};
use evosearch_core::rewards::fitness;
use evosearch_core::rng::{standard_normal, substream, substreams, Purpose};
use evosearch_core::*;

fn default_sampler(model: GaussianMixture) -> Sampler {
    Sampler::new(
        model,
        Process::Diffusion(NoiseSchedule::linear(50, 2e-3, 0.4, 0.3).unwrap()),
    )
}

/// Exact per-coordinate terminal law of the DDIM-family sampler for data
/// `N(mu, v)`, started from standard normal noise.
fn ddim_law(alpha_bar: &[f64], eta: f64, mu: f64, v: f64) -> (f64, f64) {
    let (mut m, mut var) = (0.0, 1.0);
    for t in (1..alpha_bar.len()).rev() {
        let (a, b) = (alpha_bar[t], alpha_bar[t - 1]);
        let sig2 = eta * eta * (1.0 - b) / (1.0 - a) * (1.0 - a / b);
        // x0_hat and eps_hat are affine in x for Gaussian data
        let vt = a * v + 1.0 - a;
        let x0_gain = a.sqrt() * v / vt;
        let x0_shift = (1.0 - a) * mu / vt;
        let eps_gain = (1.0 - a).sqrt() / vt;
        let eps_shift = -(1.0 - a).sqrt() * a.sqrt() * mu / vt;
        let d = (1.0 - b - sig2).max(0.0).sqrt();
        let gain = b.sqrt() * x0_gain + d * eps_gain;
        let shift = b.sqrt() * x0_shift + d * eps_shift;
        m = gain * m + shift;
        var = gain * gain * var + sig2;
    }
    (m, var)
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn ddim_law_oracle_is_self_consistent() {
    // fine ancestral discretization approaches the data law
    let fine = NoiseSchedule::linear(2000, 5e-5, 0.01, 1.0).unwrap();
    let (m, var) = ddim_law(fine.alpha_bars(), 1.0, 3.0, 0.5);
    assert!(
        (m - 3.0).abs() < 0.01 && (var / 0.5 - 1.0).abs() < 0.01,
        "{m} {var}"
    );
}

#[test]
fn initial_noise_mutation_keeps_standard_normal() {
    let n = 100_000;
    let parents = initial_noise(n, 2, 5);
    let mut rngs = substreams(5, Purpose::Mutation, 0, n);
    let children = mutate_initial_noise(&parents, 0.3, &mut rngs).unwrap();
    let mean = children.mean();
    let cov = children.covariance();
    let se_mean = (1.0 / n as f64).sqrt();
    let se_var = (2.0 / n as f64).sqrt();
    for j in 0..2 {
        assert!(mean[j].abs() < 4.0 * se_mean, "{mean:?}");
        assert!((cov[3 * j] - 1.0).abs() < 4.0 * se_var, "{cov:?}");
    }
    assert!(cov[1].abs() < 4.0 * se_mean, "{cov:?}");
}

#[test]
fn fitness_is_unbiased_across_independent_rollouts() {
    let s = default_sampler(GaussianMixture::ring(8, 1.0, 0.04).unwrap());
    let f = RewardFn::Circle { radius: 2.0 };
    let n = 20_000;
    let mut ledger = NfeLedger::default();
    let mut rngs = substreams(1, Purpose::Rollout, 0, n);
    let x_t = s
        .denoise(
            &initial_noise(n, 2, 1),
            50,
            25,
            None,
            &mut rngs,
            &mut ledger,
        )
        .unwrap();
    let mut runs = Vec::new();
    for seed in [2u64, 3] {
        let mut rngs = substreams(seed, Purpose::Rollout, 1, n);
        let (r, _) = fitness(&x_t, 25, &s, &f, &mut rngs, &mut ledger).unwrap();
        runs.push(mean_and_se(&r));
    }
    let combined = (runs[0].1.powi(2) + runs[1].1.powi(2)).sqrt();
    assert!((runs[0].0 - runs[1].0).abs() < 3.0 * combined, "{runs:?}");
    assert_eq!(ledger.reward_calls, 2 * n as u64);
}

#[test]
fn best_of_n_expected_max_matches_direct_sampling() {
    let (mu, v) = ([1.0, 0.0], 0.25);
    let model = GaussianMixture::new(vec![1.0], vec![mu.to_vec()], vec![v]).unwrap();
    let s = default_sampler(model);
    let alpha_bar = match s.process() {
        Process::Diffusion(sched) => sched.alpha_bars().to_vec(),
        Process::Flow(_) => unreachable!(),
    };
    let law: Vec<(f64, f64)> = mu
        .iter()
        .map(|&m| ddim_law(&alpha_bar, 0.3, m, v))
        .collect();
    let f = RewardFn::Circle { radius: 2.0 };
    let (n, trials) = (1000, 200);

    let searched: Vec<f64> = (0..trials)
        .map(|seed| best_of_n(n, &s, &f, seed).unwrap().best_reward())
        .collect();
    let mut rng = substream(77, Purpose::Prior, 0, 0);
    let direct: Vec<f64> = (0..trials)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let x: Vec<f64> = law
                        .iter()
                        .map(|(m, var)| m + var.sqrt() * standard_normal(&mut rng))
                        .collect();
                    f.evaluate(&x)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let (a, sa) = mean_and_se(&searched);
    let (b, sb) = mean_and_se(&direct);
    // overlapping 95% intervals
    assert!((a - b).abs() < 1.96 * (sa + sb), "{a} ± {sa} vs {b} ± {sb}");
}

#[test]
fn zero_temperature_particle_sampling_matches_independent_rollouts() {
    let s = default_sampler(GaussianMixture::ring(8, 1.0, 0.04).unwrap());
    let f = RewardFn::Circle { radius: 2.0 };
    let n = 10_000;
    let cfg = ParticleSamplingConfig {
        num_particles: n,
        resample_interval: 5,
        lambda: 1e-12,
        // uniform weights make systematic resampling the identity
        resampling: ResamplingMode::Systematic,
    };
    let ps = particle_sampling(&cfg, &s, &f, 4).unwrap();
    let bon = best_of_n(n, &s, &f, 5).unwrap();
    let rows = |r: &SearchResult| {
        let pts: Vec<&[f64]> = r.events.iter().map(|e| e.x.as_slice()).collect();
        Batch::from_rows(&pts).unwrap()
    };
    let (a, b) = (rows(&ps), rows(&bon));
    let (ma, mb) = (a.mean(), b.mean());
    let (ca, cb) = (a.covariance(), b.covariance());
    // per-coordinate variance is about 0.5 on the unit ring
    let se = (2.0 * 0.5 / n as f64).sqrt();
    for j in 0..2 {
        assert!((ma[j] - mb[j]).abs() < 4.0 * se, "{ma:?} {mb:?}");
        assert!((ca[3 * j] - cb[3 * j]).abs() < 0.05, "{ca:?} {cb:?}");
    }
}

#[test]
fn neighbouring_states_have_similar_fitness() {
    let s = default_sampler(GaussianMixture::ring(8, 1.0, 0.04).unwrap());
    let f = RewardFn::Circle { radius: 2.0 };
    let (anchors, per_anchor, t) = (100, 10, 25);
    let mut ledger = NfeLedger::default();
    let mut rngs = substreams(11, Purpose::Rollout, 0, anchors);
    let x_t = s
        .denoise(
            &initial_noise(anchors, 2, 11),
            50,
            t,
            None,
            &mut rngs,
            &mut ledger,
        )
        .unwrap();
    let mut rngs = substreams(11, Purpose::Rollout, 1, anchors);
    let (anchor_fit, _) = fitness(&x_t, t, &s, &f, &mut rngs, &mut ledger).unwrap();

    let mut distance = Vec::new();
    let mut gap = Vec::new();
    for (a, &anchor) in anchor_fit.iter().enumerate() {
        let mut rng = substream(11, Purpose::Mutation, a as u64, 0);
        let mut neighbours = Batch::new(2);
        let mut dists = Vec::new();
        for k in 0..per_anchor {
            let scale = 0.1 * (k + 1) as f64;
            let step: Vec<f64> = (0..2).map(|_| scale * standard_normal(&mut rng)).collect();
            let p: Vec<f64> = x_t.row(a).iter().zip(&step).map(|(x, d)| x + d).collect();
            dists.push(step.iter().map(|d| d * d).sum::<f64>().sqrt());
            neighbours.push(&p).unwrap();
        }
        let mut rngs = substreams(12, Purpose::Rollout, a as u64, per_anchor);
        let (fit, _) = fitness(&neighbours, t, &s, &f, &mut rngs, &mut ledger).unwrap();
        for (d, r) in dists.into_iter().zip(fit) {
            distance.push(d);
            gap.push((r - anchor).abs());
        }
    }
    let rho = pearson(&ranks(&distance), &ranks(&gap));
    let n = distance.len() as f64;
    let z = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    // one-sided p < 0.01 for a positive correlation
    assert!(rho > 0.0 && z > 2.326, "rho {rho}, z {z}");
}
