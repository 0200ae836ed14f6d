//! Time discretizations for diffusion and flow sampling, and the evolution /
//! population schedules that drive the search.
//!
//! Diffusion time is an integer step index `t = 0..=num_steps` with `t = 0`
//! the data end. Flow time is a real grid `s` from 1 (noise) to 0 (data); the
//! same integer step index addresses it, so that `t` maps to
//! `s_values[num_steps - t]`.

use crate::error::{Error, Result};

/// Cumulative signal coefficients of a variance-preserving diffusion plus the
/// DDIM stochasticity knob `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    eta: f64,
}

impl NoiseSchedule {
    /// Linear-beta schedule: `alpha_bar[t] = prod_{i <= t} (1 - beta_i)` with
    /// `beta_1 = beta_min`, `beta_N = beta_max`, and `alpha_bar[0] = 1`.
    pub fn linear(num_steps: usize, beta_min: f64, beta_max: f64, eta: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::config("num_steps", "must be at least 1"));
        }
        if !(beta_min > 0.0 && beta_min < 1.0) {
            return Err(Error::config(
                "beta_min",
                format!("{beta_min} is not in (0, 1)"),
            ));
        }
        if !(beta_max >= beta_min && beta_max < 1.0) {
            return Err(Error::config(
                "beta_max",
                format!("{beta_max} is not in [beta_min, 1)"),
            ));
        }
        let mut alpha_bar = Vec::with_capacity(num_steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for i in 0..num_steps {
            let beta = if num_steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (num_steps - 1) as f64
            };
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar, eta)
    }

    pub fn from_alpha_bar(alpha_bar: Vec<f64>, eta: f64) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::config("alpha_bar", "needs at least two entries"));
        }
        if alpha_bar[0] != 1.0 {
            return Err(Error::config("alpha_bar", "alpha_bar[0] must equal 1"));
        }
        if alpha_bar.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("alpha_bar", "must be strictly decreasing"));
        }
        let last = *alpha_bar.last().unwrap();
        if !(last > 0.0) {
            return Err(Error::config("alpha_bar", "final value must be positive"));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::config("eta", format!("{eta} is not in [0, 1]")));
        }
        let schedule = NoiseSchedule { alpha_bar, eta };
        for t in 1..=schedule.num_steps() {
            let sigma = schedule.sigma(t);
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::Schedule(format!("sigma at step {t} is {sigma}")));
            }
        }
        Ok(schedule)
    }

    #[inline]
    pub fn num_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Noise scale injected by the step `t -> t-1` (`t >= 1`).
    pub fn sigma(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        let a_t = self.alpha_bar[t];
        let a_prev = self.alpha_bar[t - 1];
        self.eta * ((1.0 - a_prev) / (1.0 - a_t)).sqrt() * (1.0 - a_t / a_prev).sqrt()
    }
}

/// Convenience alias for [`NoiseSchedule::linear`].
pub fn make_linear_schedule(
    num_steps: usize,
    beta_min: f64,
    beta_max: f64,
    eta: f64,
) -> Result<NoiseSchedule> {
    NoiseSchedule::linear(num_steps, beta_min, beta_max, eta)
}

/// Flow-time grid with a per-step diffusion coefficient for the SDE form.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTimeGrid {
    s_values: Vec<f64>,
    sigma: Vec<f64>,
}

impl FlowTimeGrid {
    /// Uniform grid `s_k = 1 - k/N` with `sigma_s = sigma_scale * s` evaluated
    /// at the start of each step. `sigma_scale = 0` gives the deterministic ODE.
    pub fn uniform(num_steps: usize, sigma_scale: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::config("num_steps", "must be at least 1"));
        }
        if !(sigma_scale >= 0.0 && sigma_scale.is_finite()) {
            return Err(Error::config(
                "flow_sigma_scale",
                format!("{sigma_scale} must be finite and non-negative"),
            ));
        }
        let n = num_steps as f64;
        let s_values: Vec<f64> = (0..=num_steps).map(|k| 1.0 - k as f64 / n).collect();
        let sigma = s_values[..num_steps]
            .iter()
            .map(|s| sigma_scale * s)
            .collect();
        Self::new(s_values, sigma)
    }

    pub fn new(s_values: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if s_values.len() < 2 {
            return Err(Error::config("s_values", "needs at least two entries"));
        }
        if s_values[0] != 1.0 || *s_values.last().unwrap() != 0.0 {
            return Err(Error::config("s_values", "must run from 1 to 0"));
        }
        if s_values.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("s_values", "must be strictly decreasing"));
        }
        if sigma.len() != s_values.len() - 1 {
            return Err(Error::config("sigma", "needs one entry per step"));
        }
        if sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config(
                "sigma",
                "entries must be finite and non-negative",
            ));
        }
        Ok(FlowTimeGrid { s_values, sigma })
    }

    #[inline]
    pub fn num_steps(&self) -> usize {
        self.s_values.len() - 1
    }

    /// Flow time at step index `t` (`t = num_steps` is `s = 1`).
    #[inline]
    pub fn s_at(&self, t: usize) -> f64 {
        self.s_values[self.num_steps() - t]
    }

    /// Diffusion coefficient used by the step `t -> t-1`.
    #[inline]
    pub fn sigma_at(&self, t: usize) -> f64 {
        self.sigma[self.num_steps() - t]
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }
}

/// Step indices `{T, ..., t_n}` at which an evolutionary generation runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolutionSchedule {
    times: Vec<usize>,
}

impl EvolutionSchedule {
    pub fn new(times: Vec<usize>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::config("evolution_times", "must not be empty"));
        }
        if times.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config(
                "evolution_times",
                format!("{times:?} is not strictly decreasing"),
            ));
        }
        if *times.last().unwrap() == 0 {
            return Err(Error::config("evolution_times", "entries must be >= 1"));
        }
        Ok(EvolutionSchedule { times })
    }

    /// `generations` times spaced uniformly from `start` downward:
    /// `start - j * (start / generations)`.
    pub fn uniform(start: usize, generations: usize) -> Result<Self> {
        if generations == 0 || generations > start {
            return Err(Error::config(
                "generations",
                format!("{generations} generations do not fit in {start} steps"),
            ));
        }
        let stride = start / generations;
        Self::new((0..generations).map(|j| start - j * stride).collect())
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The step the search starts from.
    pub fn start(&self) -> usize {
        self.times[0]
    }

    pub fn index_of(&self, t: usize) -> Option<usize> {
        self.times.iter().position(|&x| x == t)
    }
}

/// Population sizes `{k_start, k_T, ..., k_{t_n}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationSchedule {
    sizes: Vec<usize>,
}

impl PopulationSchedule {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config(
                "population",
                "needs k_start plus one size per generation",
            ));
        }
        if let Some(i) = sizes.iter().position(|&k| k == 0) {
            return Err(Error::config("population", format!("entry {i} is zero")));
        }
        if sizes[0] < sizes[1] {
            log::warn!(
                "k_start = {} is smaller than the first children population {}",
                sizes[0],
                sizes[1]
            );
        }
        Ok(PopulationSchedule { sizes })
    }

    /// `k_start = 2k` followed by `generations` entries of `k`.
    pub fn doubled_start(k: usize, generations: usize) -> Result<Self> {
        let mut sizes = vec![2 * k];
        sizes.extend(std::iter::repeat(k).take(generations));
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn k_start(&self) -> usize {
        self.sizes[0]
    }
}

/// Checks that the schedules fit each other and a sampler with `steps` steps.
pub fn validate_schedules(
    times: EvolutionSchedule,
    sizes: PopulationSchedule,
    steps: usize,
) -> Result<(EvolutionSchedule, PopulationSchedule)> {
    if sizes.sizes().len() != times.len() + 1 {
        return Err(Error::config(
            "population",
            format!(
                "has {} entries but the evolution schedule needs {}",
                sizes.sizes().len(),
                times.len() + 1
            ),
        ));
    }
    if times.start() > steps {
        return Err(Error::config(
            "evolution_times",
            format!("start {} exceeds the {steps} sampler steps", times.start()),
        ));
    }
    Ok((times, sizes))
}
