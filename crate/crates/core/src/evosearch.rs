//! Evolutionary search over denoising trajectories.
//!
//! A run starts from `k_start` Gaussian noises at the first evolution time
//! `T`. At every evolution time `t_g` the current population is denoised once
//! to clean samples (caching the states it passes through at later evolution
//! times), scored, and replaced by elites plus tournament-selected, mutated
//! parents. Generation 0 mutates in noise space with the Gaussian-preserving
//! blend `sqrt(1 - beta^2) x + beta eps`; later generations perturb
//! intermediate states with the sampler's own per-step noise scale. Children
//! are then denoised to the next evolution time and the cycle repeats.
//!
//! Every clean sample produced during fitness evaluation is kept in an
//! archive; the run's outputs are the best archive entries.

use rand::seq::index;
use rand::Rng;

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::rewards::{reward, RewardFn};
use crate::rng::{standard_normal, substream, substreams, ParticleRng, Purpose};
use crate::samplers::{NfeLedger, Sampler, TrajectoryHook};
use crate::schedules::{validate_schedules, EvolutionSchedule, PopulationSchedule};

/// Hyperparameters of one search.
#[derive(Debug, Clone, PartialEq)]
pub struct EvoConfig {
    /// Mutation rate of the initial-noise blend, in `[0, 1]`.
    pub beta: f64,
    /// Number of elites copied unchanged into each next generation.
    pub elites: usize,
    /// Entrants per tournament.
    pub tournament_size: usize,
    pub evolution: EvolutionSchedule,
    pub population: PopulationSchedule,
    /// Number of outputs reported.
    pub final_k: usize,
}

impl EvoConfig {
    /// Defaults: `beta = 0.3`, tournaments of 2, `max(1, k/16)` elites where
    /// `k` is the smallest children population, and `final_k = k`.
    pub fn with_defaults(evolution: EvolutionSchedule, population: PopulationSchedule) -> Self {
        let k_min = population.sizes()[1..].iter().copied().min().unwrap_or(1);
        EvoConfig {
            beta: 0.3,
            elites: (k_min / 16).max(1).min(k_min),
            tournament_size: 2,
            evolution,
            population,
            final_k: k_min,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        validate_schedules(self.evolution.clone(), self.population.clone(), steps)?;
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(
                "beta",
                format!("{} is not in [0, 1]", self.beta),
            ));
        }
        if self.tournament_size == 0 {
            return Err(Error::config("tournament_size", "must be at least 1"));
        }
        if self.final_k == 0 {
            return Err(Error::config("final_k", "must be at least 1"));
        }
        for (g, &k) in self.population.sizes()[1..].iter().enumerate() {
            if self.elites > k {
                return Err(Error::config(
                    "elites",
                    format!(
                        "{} elites exceed the generation-{g} population of {k}",
                        self.elites
                    ),
                ));
            }
            if 4 * self.elites > k {
                log::warn!(
                    "{} elites is more than a quarter of population {k}",
                    self.elites
                );
            }
        }
        Ok(())
    }

    /// Model calls a run will spend: `k_start * T` for generation 0 and
    /// `k_g * t_{g-1}` for each later generation (advance plus rollout).
    pub fn planned_nfe(&self) -> u64 {
        let times = self.evolution.times();
        let sizes = self.population.sizes();
        let mut total = (sizes[0] * times[0]) as u64;
        for g in 1..times.len() {
            total += (sizes[g] * times[g - 1]) as u64;
        }
        total
    }
}

/// One evaluated clean sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub index: usize,
    pub generation: usize,
    /// Model calls spent when this sample became available.
    pub cumulative_nfe: u64,
    pub reward: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub step: usize,
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    pub pool_sizes: Vec<usize>,
    pub cumulative_nfe: u64,
}

impl GenerationStats {
    pub(crate) fn from_rewards(
        generation: usize,
        step: usize,
        rewards: &[f64],
        pool_sizes: Vec<usize>,
        cumulative_nfe: u64,
    ) -> Self {
        let n = rewards.len().max(1) as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        GenerationStats {
            generation,
            step,
            mean,
            max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
            pool_sizes,
            cumulative_nfe,
        }
    }
}

/// Outcome of a search method.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Every evaluated clean sample, in evaluation order.
    pub events: Vec<Event>,
    pub best_reward_curve: Vec<(u64, f64)>,
    pub generation_stats: Vec<GenerationStats>,
    pub ledger: NfeLedger,
    pub final_k: usize,
}

impl SearchResult {
    pub(crate) fn new(
        events: Vec<Event>,
        generation_stats: Vec<GenerationStats>,
        ledger: NfeLedger,
        final_k: usize,
    ) -> Result<Self> {
        let best_reward_curve = running_best(&events)?;
        Ok(SearchResult {
            events,
            best_reward_curve,
            generation_stats,
            ledger,
            final_k,
        })
    }

    /// All events sorted by descending reward, ties by evaluation order.
    pub fn ranked(&self) -> Vec<&Event> {
        let mut order: Vec<&Event> = self.events.iter().collect();
        order.sort_by(|a, b| b.reward.total_cmp(&a.reward).then(a.index.cmp(&b.index)));
        order
    }

    pub fn top(&self, k: usize) -> Vec<&Event> {
        let mut ranked = self.ranked();
        ranked.truncate(k);
        ranked
    }

    /// The `final_k` best samples.
    pub fn outputs(&self) -> Vec<&Event> {
        self.top(self.final_k)
    }

    pub fn best_reward(&self) -> f64 {
        self.best_reward_curve
            .last()
            .map(|p| p.1)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Prefix maximum of the archive rewards in evaluation order.
pub fn running_best(events: &[Event]) -> Result<Vec<(u64, f64)>> {
    if events.is_empty() {
        return Err(Error::input("running best of an empty archive"));
    }
    let mut best = f64::NEG_INFINITY;
    Ok(events
        .iter()
        .map(|e| {
            if e.reward > best {
                best = e.reward;
            }
            (e.cumulative_nfe, best)
        })
        .collect())
}

/// Clean samples with their rewards, appended in evaluation order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Archive {
    pub(crate) events: Vec<Event>,
}

impl Archive {
    /// Records a batch of rollouts that each took `steps` model calls,
    /// attributing completion times as if the particles ran one after another
    /// starting at `base_nfe`.
    pub(crate) fn record(
        &mut self,
        x0: &Batch,
        rewards: &[f64],
        generation: usize,
        base_nfe: u64,
        steps: usize,
    ) {
        for (i, (row, &r)) in x0.rows().zip(rewards).enumerate() {
            let index = self.events.len();
            self.events.push(Event {
                index,
                generation,
                cumulative_nfe: base_nfe + ((i + 1) * steps) as u64,
                reward: r,
                x: row.to_vec(),
            });
        }
    }
}

/// States cached at each evolution time, across generations.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationLedger {
    pub pools: Vec<Batch>,
}

/// Fitness values aligned one-to-one with [`PopulationLedger`] pools.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardLedger {
    pub rewards: Vec<Vec<f64>>,
}

impl PopulationLedger {
    pub fn new(generations: usize, dim: usize) -> Self {
        PopulationLedger {
            pools: vec![Batch::new(dim); generations],
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pools.iter().map(Batch::len).collect()
    }
}

impl RewardLedger {
    pub fn new(generations: usize) -> Self {
        RewardLedger {
            rewards: vec![Vec::new(); generations],
        }
    }
}

/// Gaussian-preserving blend `sqrt(1 - beta^2) * parent + beta * noise` with
/// the noise supplied by the caller.
pub fn mutate_initial_noise_with(parents: &Batch, beta: f64, noise: &Batch) -> Result<Batch> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::config("beta", format!("{beta} is not in [0, 1]")));
    }
    if noise.len() != parents.len() || noise.dim() != parents.dim() {
        return Err(Error::input("noise batch does not match the parents"));
    }
    let keep = (1.0 - beta * beta).sqrt();
    let mut out = parents.clone();
    for (row, n) in out.rows_mut().zip(noise.rows()) {
        for (x, e) in row.iter_mut().zip(n) {
            *x = keep * *x + beta * e;
        }
    }
    Ok(out)
}

fn draw_noise(len: usize, dim: usize, rngs: &mut [ParticleRng]) -> Batch {
    let mut noise = Batch::zeros(len, dim);
    for (row, rng) in noise.rows_mut().zip(rngs.iter_mut()) {
        row.iter_mut().for_each(|v| *v = standard_normal(rng));
    }
    noise
}

/// Initial-noise mutation with fresh noise per child.
pub fn mutate_initial_noise(parents: &Batch, beta: f64, rngs: &mut [ParticleRng]) -> Result<Batch> {
    if rngs.len() != parents.len() {
        return Err(Error::input("one random substream per parent is required"));
    }
    let noise = draw_noise(parents.len(), parents.dim(), rngs);
    mutate_initial_noise_with(parents, beta, &noise)
}

/// `parent + sigma * noise` with the noise supplied by the caller.
pub fn mutate_intermediate_with(parents: &Batch, sigma: f64, noise: &Batch) -> Result<Batch> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::input(format!(
            "mutation scale {sigma} must be non-negative"
        )));
    }
    if noise.len() != parents.len() || noise.dim() != parents.dim() {
        return Err(Error::input("noise batch does not match the parents"));
    }
    let mut out = parents.clone();
    for (row, n) in out.rows_mut().zip(noise.rows()) {
        for (x, e) in row.iter_mut().zip(n) {
            *x += sigma * e;
        }
    }
    Ok(out)
}

/// Intermediate-state mutation at step `t` with the sampler's noise scale.
pub fn mutate_intermediate(
    parents: &Batch,
    t: usize,
    sampler: &Sampler,
    rngs: &mut [ParticleRng],
) -> Result<Batch> {
    if rngs.len() != parents.len() {
        return Err(Error::input("one random substream per parent is required"));
    }
    let sigma = sampler.mutation_sigma(t)?;
    let noise = draw_noise(parents.len(), parents.dim(), rngs);
    mutate_intermediate_with(parents, sigma, &noise)
}

/// Indices of the `m` highest-fitness entries, ties by lowest index.
pub fn top_indices(fitness: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

/// `k` tournament winners. Each tournament draws `b` distinct entrants and
/// keeps the fittest (lowest index on ties); tournaments are independent, so
/// winners may repeat.
pub fn tournament_select_indices<R: Rng + ?Sized>(
    fitness: &[f64],
    k: usize,
    b: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = fitness.len();
    if n == 0 {
        return Err(Error::input("tournament over an empty pool"));
    }
    if b == 0 || b > n {
        return Err(Error::config(
            "tournament_size",
            format!("{b} entrants cannot be drawn from a pool of {n}"),
        ));
    }
    Ok((0..k)
        .map(|_| {
            index::sample(rng, n, b)
                .into_iter()
                .reduce(|best, c| match fitness[c].total_cmp(&fitness[best]) {
                    std::cmp::Ordering::Greater => c,
                    std::cmp::Ordering::Equal if c < best => c,
                    _ => best,
                })
                .expect("b >= 1")
        })
        .collect())
}

pub fn tournament_select<R: Rng + ?Sized>(
    pool: &Batch,
    fitness: &[f64],
    k: usize,
    b: usize,
    rng: &mut R,
) -> Result<Batch> {
    if pool.len() != fitness.len() {
        return Err(Error::input("pool and fitness lengths differ"));
    }
    Ok(pool.select(&tournament_select_indices(fitness, k, b, rng)?))
}

/// Mutable state threaded through the generations of one run.
pub struct SearchState {
    pub pools: PopulationLedger,
    pub rewards: RewardLedger,
    pub(crate) archive: Archive,
    pub generation_stats: Vec<GenerationStats>,
    pub ledger: NfeLedger,
}

impl SearchState {
    pub fn new(generations: usize, dim: usize) -> Self {
        SearchState {
            pools: PopulationLedger::new(generations, dim),
            rewards: RewardLedger::new(generations),
            archive: Archive::default(),
            generation_stats: Vec::new(),
            ledger: NfeLedger::default(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.archive.events
    }
}

/// One generation at evolution index `g`, starting from `x_start` at
/// `cfg.evolution.times()[g]`. Returns the children at that same step.
pub fn evosearch_generation(
    x_start: &Batch,
    g: usize,
    state: &mut SearchState,
    cfg: &EvoConfig,
    sampler: &Sampler,
    reward_fn: &RewardFn,
    seed: u64,
) -> Result<Batch> {
    let times = cfg.evolution.times();
    let t_g = *times
        .get(g)
        .ok_or_else(|| Error::input(format!("generation {g} beyond the evolution schedule")))?;
    let k = cfg.population.sizes()[g + 1];
    let m = cfg.elites;
    if m > k {
        return Err(Error::config(
            "elites",
            format!("{m} elites exceed the population size {k}"),
        ));
    }
    let n = x_start.len();

    // (1) roll every particle out once, caching states at t_j <= t_g
    let base_nfe = state.ledger.model_calls;
    let mut rngs = substreams(seed, Purpose::Rollout, g as u64, n);
    let pools = &mut state.pools.pools;
    let mut cached: Vec<(usize, Batch)> = Vec::new();
    let x0 = {
        let mut hook = TrajectoryHook::new(times[g..].iter().copied(), |t, b: &Batch| {
            cached.push((t, b.clone()))
        });
        sampler.denoise(
            x_start,
            t_g,
            0,
            Some(&mut hook),
            &mut rngs,
            &mut state.ledger,
        )?
    };
    for (t, states) in cached {
        let j = cfg
            .evolution
            .index_of(t)
            .expect("hook only fires at evolution times");
        pools[j].extend(&states)?;
    }

    // (2) fitness of this rollout, broadcast to every later schedule index
    let r = reward(reward_fn, &x0, &mut state.ledger);
    for i in g..times.len() {
        state.rewards.rewards[i].extend_from_slice(&r);
    }

    // (3) archive the clean samples
    state.archive.record(&x0, &r, g, base_nfe, t_g);
    state.generation_stats.push(GenerationStats::from_rewards(
        g,
        t_g,
        &r,
        state.pools.sizes(),
        state.ledger.model_calls,
    ));

    // (4) elites, (5) tournament parents
    let pool = &state.pools.pools[g];
    let fitness = &state.rewards.rewards[g];
    let elites = pool.select(&top_indices(fitness, m));
    let mut children = elites;
    if k > m {
        let mut select_rng = substream(seed, Purpose::Selection, g as u64, 0);
        let parents =
            tournament_select(pool, fitness, k - m, cfg.tournament_size, &mut select_rng)?;

        // (6) mutate
        let mut mut_rngs = substreams(seed, Purpose::Mutation, g as u64, parents.len());
        let mutated = if g == 0 {
            mutate_initial_noise(&parents, cfg.beta, &mut mut_rngs)?
        } else {
            mutate_intermediate(&parents, t_g, sampler, &mut mut_rngs)?
        };
        // (7)
        children.extend(&mutated)?;
    }
    Ok(children)
}

/// Full evolutionary search from Gaussian noise.
///
/// The children of the last generation are not denoised: their clean samples
/// would never be evaluated, so the search ends once the last generation's
/// fitness is recorded.
pub fn evosearch_run(
    cfg: &EvoConfig,
    sampler: &Sampler,
    reward_fn: &RewardFn,
    seed: u64,
) -> Result<SearchResult> {
    cfg.validate(sampler.num_steps())?;
    let times = cfg.evolution.times();
    let dim = sampler.dim();
    let mut state = SearchState::new(times.len(), dim);

    let mut noise_rngs = substreams(seed, Purpose::InitialNoise, 0, cfg.population.k_start());
    let mut x = draw_noise(cfg.population.k_start(), dim, &mut noise_rngs);

    for g in 0..times.len() {
        let children = evosearch_generation(&x, g, &mut state, cfg, sampler, reward_fn, seed)?;
        if g + 1 < times.len() {
            let mut rngs = substreams(seed, Purpose::Advance, g as u64, children.len());
            x = sampler.denoise(
                &children,
                times[g],
                times[g + 1],
                None,
                &mut rngs,
                &mut state.ledger,
            )?;
        }
    }

    SearchResult::new(
        state.archive.events,
        state.generation_stats,
        state.ledger,
        cfg.final_k,
    )
}

/// Initial Gaussian noise for particles `0..n` of a run; shared by every
/// method so equal seeds start from equal noise.
pub fn initial_noise(n: usize, dim: usize, seed: u64) -> Batch {
    let mut rngs = substreams(seed, Purpose::InitialNoise, 0, n);
    draw_noise(n, dim, &mut rngs)
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

    fn cfg(times: Vec<usize>, sizes: Vec<usize>, elites: usize, beta: f64) -> EvoConfig {
        EvoConfig {
            beta,
            elites,
            tournament_size: 2,
            evolution: EvolutionSchedule::new(times).unwrap(),
            population: PopulationSchedule::new(sizes).unwrap(),
            final_k: 4,
        }
    }

    #[test]
    fn initial_noise_mutation_examples() {
        let parents = Batch::from_rows(&[[1.0, 0.0], [-0.5, 2.0]]).unwrap();
        let zero = Batch::zeros(2, 2);
        assert_eq!(
            mutate_initial_noise_with(&parents, 0.0, &zero).unwrap(),
            parents
        );

        let p = Batch::from_rows(&[[1.0, 0.0]]).unwrap();
        let child = mutate_initial_noise_with(&p, 0.3, &Batch::zeros(1, 2)).unwrap();
        assert!((child.row(0)[0] - 0.953_939_201_416_945_6).abs() < 1e-15);
        assert_eq!(child.row(0)[1], 0.0);

        let noise = Batch::from_rows(&[[0.2, 0.4], [-1.0, 0.1]]).unwrap();
        assert_eq!(
            mutate_initial_noise_with(&parents, 1.0, &noise).unwrap(),
            noise
        );

        let mut rngs = substreams(0, Purpose::Mutation, 0, 2);
        assert!(mutate_initial_noise(&parents, 1.5, &mut rngs).is_err());
    }

    #[test]
    fn initial_noise_mutation_with_beta_zero_is_identity() {
        let parents = initial_noise(16, 2, 3);
        let mut rngs = substreams(0, Purpose::Mutation, 0, 16);
        assert_eq!(
            mutate_initial_noise(&parents, 0.0, &mut rngs).unwrap(),
            parents
        );
    }

    #[test]
    fn intermediate_mutation_examples() {
        let p = Batch::from_rows(&[[1.0, 1.0]]).unwrap();
        let noise = Batch::from_rows(&[[2.0, 0.0]]).unwrap();
        assert_eq!(
            mutate_intermediate_with(&p, 0.5, &noise).unwrap().row(0),
            &[2.0, 1.0]
        );
        assert_eq!(mutate_intermediate_with(&p, 0.0, &noise).unwrap(), p);
    }

    #[test]
    fn intermediate_mutation_covariance() {
        let s = sampler();
        let t = 25;
        let sigma = s.mutation_sigma(t).unwrap();
        let n = 100_000;
        let parents = Batch::from_rows(&vec![[0.3, -0.7]; n]).unwrap();
        let mut rngs = substreams(4, Purpose::Mutation, 1, n);
        let kids = mutate_intermediate(&parents, t, &s, &mut rngs).unwrap();
        let cov = kids.covariance();
        let se = sigma * sigma * (2.0 / n as f64).sqrt();
        assert!((cov[0] - sigma * sigma).abs() < 4.0 * se);
        assert!((cov[3] - sigma * sigma).abs() < 4.0 * se);
        assert!(cov[1].abs() < 4.0 * sigma * sigma / (n as f64).sqrt());
    }

    #[test]
    fn tournament_full_and_single() {
        let fitness = [0.1, 0.9, -0.3, 0.9, 0.5];
        let mut rng = substream(0, Purpose::Selection, 0, 0);
        let winners = tournament_select_indices(&fitness, 50, 5, &mut rng).unwrap();
        assert!(
            winners.iter().all(|&w| w == 1),
            "ties go to the lowest index"
        );

        let mut counts = [0usize; 5];
        for w in tournament_select_indices(&fitness, 50_000, 1, &mut rng).unwrap() {
            counts[w] += 1;
        }
        for c in counts {
            // uniform: 10000 +- 4 sd (sd ~ 89)
            assert!((c as i64 - 10_000).abs() < 360, "{counts:?}");
        }
        assert!(tournament_select_indices(&[], 1, 1, &mut rng).is_err());
        assert!(tournament_select_indices(&fitness, 1, 6, &mut rng).is_err());
    }

    #[test]
    fn tournament_best_selected_with_probability_b_over_n() {
        let n = 20;
        let fitness: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
        let mut rng = substream(1, Purpose::Selection, 0, 0);
        let cycles = 100_000;
        let hits = tournament_select_indices(&fitness, cycles, 2, &mut rng)
            .unwrap()
            .into_iter()
            .filter(|&w| w == 0)
            .count() as f64;
        let p = 2.0 / n as f64;
        let se = (p * (1.0 - p) / cycles as f64).sqrt();
        assert!(
            (hits / cycles as f64 - p).abs() < 3.0 * se,
            "rate {}",
            hits / cycles as f64
        );
    }

    #[test]
    fn top_indices_ties() {
        assert_eq!(top_indices(&[1.0, 3.0, 3.0, 2.0], 3), vec![1, 2, 3]);
        assert_eq!(top_indices(&[1.0], 0), Vec::<usize>::new());
    }

    #[test]
    fn running_best_examples() {
        let ev = |r: f64, i: usize| Event {
            index: i,
            generation: 0,
            cumulative_nfe: i as u64 + 1,
            reward: r,
            x: vec![0.0],
        };
        let curve = running_best(&[ev(-3.0, 0), ev(-1.0, 1), ev(-2.0, 2)]).unwrap();
        assert_eq!(
            curve.iter().map(|p| p.1).collect::<Vec<_>>(),
            vec![-3.0, -1.0, -1.0]
        );
        assert_eq!(running_best(&[ev(-5.0, 0)]).unwrap(), vec![(1, -5.0)]);
        assert!(running_best(&[]).is_err());
    }

    #[test]
    fn degenerate_generation_is_one_best_of_n_round() {
        let s = sampler();
        let c = cfg(vec![50], vec![16, 8], 0, 1.0);
        let mut state = SearchState::new(1, 2);
        let x = initial_noise(16, 2, 0);
        let kids = evosearch_generation(
            &x,
            0,
            &mut state,
            &c,
            &s,
            &RewardFn::Circle { radius: 2.0 },
            0,
        )
        .unwrap();
        assert_eq!(kids.len(), 8);
        assert_eq!(state.events().len(), 16);
        assert_eq!(state.ledger.model_calls, 16 * 50);
        // beta = 1 discards the parents: children are fresh standard normals
        let mut rngs = substreams(0, Purpose::Mutation, 0, 8);
        let fresh = draw_noise(8, 2, &mut rngs);
        assert_eq!(kids, fresh);
    }

    #[test]
    fn full_elitism_copies_top_of_pool() {
        let s = sampler();
        let c = cfg(vec![50, 25], vec![16, 4, 4], 4, 0.3);
        let mut state = SearchState::new(2, 2);
        let x = initial_noise(16, 2, 1);
        let f = RewardFn::Circle { radius: 2.0 };
        let kids = evosearch_generation(&x, 0, &mut state, &c, &s, &f, 1).unwrap();
        let top = top_indices(&state.rewards.rewards[0], 4);
        assert_eq!(kids, state.pools.pools[0].select(&top));
        // the pool at index 0 is exactly the starting batch
        assert_eq!(state.pools.pools[0], x);
    }

    #[test]
    fn ledger_bookkeeping_two_generations() {
        let s = sampler();
        let c = cfg(vec![50, 25], vec![64, 32, 32], 2, 0.3);
        let f = RewardFn::Circle { radius: 2.0 };
        let mut state = SearchState::new(2, 2);
        let x = initial_noise(64, 2, 2);
        let kids = evosearch_generation(&x, 0, &mut state, &c, &s, &f, 2).unwrap();
        assert_eq!(state.pools.sizes(), vec![64, 64]);
        assert_eq!(state.rewards.rewards[1].len(), 64);
        let mut rngs = substreams(2, Purpose::Advance, 0, 32);
        let x1 = s
            .denoise(&kids, 50, 25, None, &mut rngs, &mut state.ledger)
            .unwrap();
        evosearch_generation(&x1, 1, &mut state, &c, &s, &f, 2).unwrap();
        assert_eq!(state.pools.sizes(), vec![64, 96]);
        assert_eq!(state.rewards.rewards[0].len(), 64);
        assert_eq!(state.rewards.rewards[1].len(), 96);
        // generation-1 starting states sit after the generation-0 cache
        assert_eq!(
            state.pools.pools[1].select(&(64..96).collect::<Vec<_>>()),
            x1
        );
        assert_eq!(state.ledger.model_calls, 64 * 50 + 32 * 25 + 32 * 25);
    }

    #[test]
    fn elites_exceeding_population_is_an_error() {
        let c = cfg(vec![50], vec![8, 4], 5, 0.3);
        assert!(matches!(c.validate(50), Err(Error::Config { .. })));
        let mut state = SearchState::new(1, 2);
        let x = initial_noise(8, 2, 0);
        let err = evosearch_generation(
            &x,
            0,
            &mut state,
            &c,
            &sampler(),
            &RewardFn::Constant(0.0),
            0,
        );
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn minimal_population_single_lineage() {
        let s = sampler();
        let mut c = cfg(vec![50, 40, 30, 20, 10], vec![1; 6], 0, 0.3);
        c.tournament_size = 1;
        c.final_k = 1;
        let r = evosearch_run(&c, &s, &RewardFn::Circle { radius: 2.0 }, 5).unwrap();
        assert_eq!(r.events.len(), 5);
        assert_eq!(
            r.events.iter().map(|e| e.generation).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(r.ledger.model_calls, c.planned_nfe());
    }

    #[test]
    fn planned_nfe_matches_run() {
        let s = sampler();
        let c = cfg(
            vec![50, 40, 30, 20, 10],
            vec![32, 16, 16, 16, 16, 16],
            1,
            0.3,
        );
        assert_eq!(c.planned_nfe(), 32 * 50 + 16 * (50 + 40 + 30 + 20));
        let r = evosearch_run(&c, &s, &RewardFn::Circle { radius: 2.0 }, 9).unwrap();
        assert_eq!(r.ledger.model_calls, c.planned_nfe());
        assert_eq!(r.ledger.reward_calls as usize, r.events.len());
        assert_eq!(
            r.events.last().unwrap().cumulative_nfe,
            r.ledger.model_calls
        );
    }
}
