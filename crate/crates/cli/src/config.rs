//! Experiment configuration: TOML schema and resolution into library types.

use std::path::{Path, PathBuf};

use evosearch_core::baselines::{ParticleSamplingConfig, ResamplingMode};
use evosearch_core::metrics::CoverageSpec;
use evosearch_core::rewards::CustomExpression;
use evosearch_core::{
    EvoConfig, EvolutionSchedule, FlowTimeGrid, GaussianMixture, NoiseSchedule, PopulationSchedule,
    Process, RewardFn, Sampler,
};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Relative slack allowed between a declared schedule's cost and `nfe_budget`.
pub const BUDGET_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Evosearch,
    BestOfN,
    ParticleSampling,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Evosearch => "evosearch",
            Method::BestOfN => "best_of_n",
            Method::ParticleSampling => "particle_sampling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Evosearch, Method::BestOfN, Method::ParticleSampling]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Model calls per method and seed. Sizes any population not given explicitly.
    pub nfe_budget: Option<u64>,
    pub model: ModelSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    pub reward: RewardSection,
    #[serde(default)]
    pub evosearch: EvoSection,
    #[serde(default)]
    pub best_of_n: BestOfNSection,
    #[serde(default)]
    pub particle_sampling: ParticleSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_methods() -> Vec<Method> {
    vec![Method::Evosearch, Method::BestOfN, Method::ParticleSampling]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindName {
    #[default]
    Diffusion,
    Flow,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    pub components: usize,
    pub radius: f64,
    pub variance: f64,
}

/// Either `ring` or the explicit `weights`/`means`/`variances` arrays.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub kind: ModelKindName,
    pub ring: Option<RingSpec>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub variances: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub eta: f64,
    /// `c` in the flow noise level `sigma_s = c * s`.
    pub flow_sigma_scale: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            steps: 50,
            beta_min: 2e-3,
            beta_max: 0.4,
            eta: 0.3,
            flow_sigma_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSection {
    Circle {
        radius: f64,
    },
    /// Log-density of the model's own mixture.
    MixtureLogDensity,
    RadialBand {
        center: Vec<f64>,
        radius: f64,
        width: f64,
    },
    Expression {
        expr: String,
    },
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvoSection {
    /// Explicit evolution times; defaults to `generations` uniform steps from the start.
    pub evolution: Option<Vec<usize>>,
    pub generations: Option<usize>,
    /// Explicit population sizes `[k_start, k_1, ...]`.
    pub population: Option<Vec<usize>>,
    pub beta: Option<f64>,
    pub elites: Option<usize>,
    pub tournament_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestOfNSection {
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    pub num_particles: Option<usize>,
    pub resample_interval: Option<usize>,
    pub lambda: Option<f64>,
    pub resampling: Option<ResamplingName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingName {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub band_width: f64,
    pub angular_bins: usize,
    /// Defaults to three standard deviations of the widest component.
    pub mode_radius: Option<f64>,
    /// Number of top samples used for coverage and output reward.
    pub top_k: usize,
    /// Number of top samples used for diversity.
    pub diversity_top: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            band_width: 0.15,
            angular_bins: 8,
            mode_radius: None,
            top_k: 64,
            diversity_top: 10,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub budgets: Option<Vec<u64>>,
}

/// Library-level settings for one budget.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub sampler: Sampler,
    pub reward: RewardFn,
    pub evo: EvoConfig,
    pub best_of_n: usize,
    pub particle: ParticleSamplingConfig,
    pub coverage: CoverageSpec,
    pub top_k: usize,
    pub diversity_top: usize,
    pub budget: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        if cfg.seeds.is_empty() {
            return Err(CliError::Config(
                "seeds: at least one seed is required".into(),
            ));
        }
        if cfg.methods.is_empty() {
            return Err(CliError::Config(
                "methods: at least one method is required".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn model(&self) -> CliResult<GaussianMixture> {
        let m = &self.model;
        let explicit = (&m.weights, &m.means, &m.variances);
        let mixture = match (&m.ring, explicit) {
            (Some(r), (None, None, None)) => {
                GaussianMixture::ring(r.components, r.radius, r.variance)
            }
            (None, (Some(w), Some(mu), Some(v))) => {
                GaussianMixture::new(w.clone(), mu.clone(), v.clone())
            }
            (Some(_), _) => {
                return Err(CliError::Config(
                    "model: give either `ring` or `weights`/`means`/`variances`, not both".into(),
                ))
            }
            (None, _) => {
                return Err(CliError::Config(
                    "model: `weights`, `means` and `variances` are all required without `ring`"
                        .into(),
                ))
            }
        };
        mixture.map_err(|e| CliError::in_section("model", e))
    }

    pub fn sampler(&self) -> CliResult<Sampler> {
        let s = &self.schedule;
        let process = match self.model.kind {
            ModelKindName::Diffusion => Process::Diffusion(
                NoiseSchedule::linear(s.steps, s.beta_min, s.beta_max, s.eta)
                    .map_err(|e| CliError::in_section("schedule", e))?,
            ),
            ModelKindName::Flow => Process::Flow(
                FlowTimeGrid::uniform(s.steps, s.flow_sigma_scale)
                    .map_err(|e| CliError::in_section("schedule", e))?,
            ),
        };
        Ok(Sampler::new(self.model()?, process))
    }

    pub fn reward_fn(&self, model: &GaussianMixture) -> CliResult<RewardFn> {
        Ok(match &self.reward {
            RewardSection::Circle { radius } => RewardFn::Circle { radius: *radius },
            RewardSection::MixtureLogDensity => RewardFn::MixtureLogDensity(model.clone()),
            RewardSection::RadialBand {
                center,
                radius,
                width,
            } => {
                if center.len() != model.dim() {
                    return Err(CliError::Config(format!(
                        "reward.center: has {} coordinates but the model has {}",
                        center.len(),
                        model.dim()
                    )));
                }
                RewardFn::RadialBand {
                    center: center.clone(),
                    radius: *radius,
                    width: *width,
                }
            }
            RewardSection::Expression { expr } => RewardFn::Expression(
                CustomExpression::parse(expr, model.dim())
                    .map_err(|e| CliError::in_section("reward", e))?,
            ),
            RewardSection::Constant { value } => RewardFn::Constant(*value),
        })
    }

    fn evolution(&self, steps: usize) -> CliResult<EvolutionSchedule> {
        let e = &self.evosearch;
        match (&e.evolution, e.generations) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "evosearch: give either `evolution` or `generations`, not both".into(),
            )),
            (Some(times), None) => EvolutionSchedule::new(times.clone())
                .map_err(|e| CliError::in_section("evosearch", e)),
            (None, g) => EvolutionSchedule::uniform(steps, g.unwrap_or(5))
                .map_err(|e| CliError::in_section("evosearch", e)),
        }
    }

    /// Resolves every section for `budget` (falling back to `nfe_budget`).
    pub fn resolve(&self, budget: Option<u64>) -> CliResult<Resolved> {
        let budget = budget.or(self.nfe_budget);
        if budget == Some(0) {
            return Err(CliError::Config("nfe_budget: must be positive".into()));
        }
        let sampler = self.sampler()?;
        let steps = sampler.num_steps();
        let reward = self.reward_fn(sampler.model())?;
        let m = &self.metrics;

        let evolution = self.evolution(steps)?;
        let population = match (&self.evosearch.population, budget) {
            (Some(sizes), Some(b)) if self.sweep_scaling(sizes, &evolution, b) => {
                PopulationSchedule::new(scale_population(sizes, &evolution, b))
            }
            (Some(sizes), _) => PopulationSchedule::new(sizes.clone()),
            (None, Some(b)) => {
                let k = b / doubled_start_cost(&evolution);
                if k == 0 {
                    return Err(CliError::Config(format!(
                        "nfe_budget: {b} cannot fund one particle per generation of evolution {:?}",
                        evolution.times()
                    )));
                }
                PopulationSchedule::doubled_start(k as usize, evolution.len())
            }
            (None, None) => PopulationSchedule::doubled_start(64, evolution.len()),
        }
        .map_err(|e| CliError::in_section("evosearch", e))?;

        let mut evo = EvoConfig::with_defaults(evolution, population);
        evo.final_k = m.top_k;
        if let Some(beta) = self.evosearch.beta {
            evo.beta = beta;
        }
        if let Some(elites) = self.evosearch.elites {
            evo.elites = elites;
        }
        if let Some(b) = self.evosearch.tournament_size {
            evo.tournament_size = b;
        }
        evo.validate(steps)
            .map_err(|e| CliError::in_section("evosearch", e))?;

        let best_of_n = per_step_count(
            "best_of_n.n",
            self.best_of_n.n,
            budget,
            steps,
            self.methods.contains(&Method::BestOfN),
        )?;
        let p = &self.particle_sampling;
        let particle = ParticleSamplingConfig {
            num_particles: per_step_count(
                "particle_sampling.num_particles",
                p.num_particles,
                budget,
                steps,
                self.methods.contains(&Method::ParticleSampling),
            )?,
            resample_interval: p.resample_interval.unwrap_or(1),
            lambda: p.lambda.unwrap_or(10.0),
            resampling: match p.resampling.unwrap_or(ResamplingName::Systematic) {
                ResamplingName::Multinomial => ResamplingMode::Multinomial,
                ResamplingName::Systematic => ResamplingMode::Systematic,
            },
        };
        particle
            .validate()
            .map_err(|e| CliError::in_section("particle_sampling", e))?;

        if let Some(b) = budget {
            for method in &self.methods {
                let (field, cost) = match method {
                    Method::Evosearch => ("evosearch.population", evo.planned_nfe()),
                    Method::BestOfN => ("best_of_n.n", (best_of_n * steps) as u64),
                    Method::ParticleSampling => (
                        "particle_sampling.num_particles",
                        (particle.num_particles * steps) as u64,
                    ),
                };
                check_budget(field, cost, b)?;
            }
        }

        let model = sampler.model();
        let widest = model.variances().iter().copied().fold(0.0, f64::max);
        let target_radius = match &reward {
            RewardFn::Circle { radius } => *radius,
            RewardFn::RadialBand { radius, .. } => *radius,
            _ => 0.0,
        };
        let coverage = CoverageSpec {
            band_width: m.band_width,
            num_angular_bins: m.angular_bins,
            mode_radius: m.mode_radius.unwrap_or(3.0 * widest.sqrt()),
            target_radius,
        };
        coverage
            .validate()
            .map_err(|e| CliError::in_section("metrics", e))?;
        if m.top_k == 0 {
            return Err(CliError::Config("metrics.top_k: must be at least 1".into()));
        }
        if m.diversity_top < 2 {
            return Err(CliError::Config(
                "metrics.diversity_top: must be at least 2".into(),
            ));
        }

        Ok(Resolved {
            sampler,
            reward,
            evo,
            best_of_n,
            particle,
            coverage,
            top_k: m.top_k,
            diversity_top: m.diversity_top,
            budget,
        })
    }

    /// An explicit population is rescaled only when a sweep budget differs
    /// from the configured one.
    fn sweep_scaling(&self, sizes: &[usize], evolution: &EvolutionSchedule, budget: u64) -> bool {
        self.nfe_budget != Some(budget) && planned(sizes, evolution) != budget
    }
}

fn planned(sizes: &[usize], evolution: &EvolutionSchedule) -> u64 {
    let times = evolution.times();
    let mut total = (sizes[0] * times[0]) as u64;
    for g in 1..times.len().min(sizes.len()) {
        total += (sizes[g] * times[g - 1]) as u64;
    }
    total
}

fn scale_population(sizes: &[usize], evolution: &EvolutionSchedule, budget: u64) -> Vec<usize> {
    let factor = budget as f64 / planned(sizes, evolution).max(1) as f64;
    sizes
        .iter()
        .map(|&k| ((k as f64 * factor).floor() as usize).max(1))
        .collect()
}

/// Model calls per unit `k` of the schedule `[2k, k, k, ...]`.
fn doubled_start_cost(evolution: &EvolutionSchedule) -> u64 {
    let times = evolution.times();
    let mut cost = 2 * times[0] as u64;
    for g in 1..times.len() {
        cost += times[g - 1] as u64;
    }
    cost
}

/// Particle count for a per-step method; unused methods get a placeholder.
fn per_step_count(
    field: &str,
    explicit: Option<usize>,
    budget: Option<u64>,
    steps: usize,
    used: bool,
) -> CliResult<usize> {
    match (explicit, budget) {
        (None, None) if !used => Ok(1),
        (Some(0), _) => Err(CliError::Config(format!("{field}: must be at least 1"))),
        (Some(n), _) => Ok(n),
        (None, Some(b)) => match (b / steps as u64) as usize {
            0 => Err(CliError::Config(format!(
                "{field}: nfe_budget {b} is below one rollout of {steps} steps"
            ))),
            n => Ok(n),
        },
        (None, None) => Err(CliError::Config(format!(
            "{field}: required when nfe_budget is absent"
        ))),
    }
}

fn check_budget(field: &str, cost: u64, budget: u64) -> CliResult<()> {
    let gap = (cost as f64 - budget as f64).abs() / budget as f64;
    if gap > BUDGET_TOLERANCE {
        return Err(CliError::Config(format!(
            "{field}: spends {cost} model calls, more than {:.0}% away from nfe_budget {budget}",
            BUDGET_TOLERANCE * 100.0
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        ring = { components = 8, radius = 1.0, variance = 0.04 }
        [reward]
        kind = "circle"
        radius = 2.0
    "#;

    fn with(extra: &str) -> String {
        format!("{extra}\n{MINIMAL}")
    }

    #[test]
    fn budget_derives_populations() {
        let cfg = ExperimentConfig::from_toml(&with("nfe_budget = 20000")).unwrap();
        let r = cfg.resolve(None).unwrap();
        assert_eq!(r.evo.population.sizes(), &[166, 83, 83, 83, 83, 83]);
        assert_eq!(r.evo.evolution.times(), &[50, 40, 30, 20, 10]);
        assert_eq!(r.evo.planned_nfe(), 19_920);
        assert_eq!(r.best_of_n, 400);
        assert_eq!(r.particle.num_particles, 400);
        let small = cfg.resolve(Some(2000)).unwrap();
        assert_eq!(small.evo.population.sizes()[1], 8);
    }

    #[test]
    fn explicit_population_must_match_budget() {
        let text = with("nfe_budget = 20000\n[evosearch]\npopulation = [128, 64, 64, 64, 64, 64]");
        let err = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve(None)
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("evosearch.population"), "{err}");

        let text = with("nfe_budget = 15360\nmethods = [\"evosearch\"]\n[evosearch]\npopulation = [128, 64, 64, 64, 64, 64]");
        let r = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve(None)
            .unwrap();
        assert_eq!(r.evo.planned_nfe(), 15_360);
        // a different sweep budget rescales the declared schedule
        let r = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve(Some(153_600))
            .unwrap();
        assert_eq!(r.evo.population.sizes(), &[1280, 640, 640, 640, 640, 640]);
    }

    #[test]
    fn errors_are_addressed() {
        let err = ExperimentConfig::from_toml(&with("[evosearch]\nelitez = 3")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line") && msg.contains("elitez"), "{msg}");

        let err =
            ExperimentConfig::from_toml(&with("nfe_budget = 20000\n[evosearch]\nelites = 500"))
                .unwrap()
                .resolve(None)
                .unwrap_err();
        assert!(err.to_string().contains("evosearch.elites"), "{err}");

        let err = ExperimentConfig::from_toml(&with("nfe_budget = 20000\n[schedule]\nsteps = 50\nbeta_min = 0.5\nbeta_max = 0.1\neta = 1.0\nflow_sigma_scale = 0.5"))
            .unwrap()
            .resolve(None)
            .unwrap_err();
        assert!(err.to_string().contains("schedule.beta"), "{err}");

        let err = ExperimentConfig::from_toml(&with("[best_of_n]\nn = 4"))
            .unwrap()
            .resolve(None)
            .unwrap_err();
        assert!(
            err.to_string().contains("particle_sampling.num_particles"),
            "{err}"
        );
    }

    #[test]
    fn expression_and_explicit_mixture() {
        let text = r#"
            nfe_budget = 5000
            [model]
            kind = "flow"
            weights = [0.5, 0.5]
            means = [[-1.0, 0.0], [1.0, 0.0]]
            variances = [0.1, 0.1]
            [reward]
            kind = "expression"
            expr = "-math::abs(x^2 + y^2 - 4)"
        "#;
        let r = ExperimentConfig::from_toml(text)
            .unwrap()
            .resolve(None)
            .unwrap();
        assert_eq!(r.reward.evaluate(&[1.0, 1.0]), -2.0);
        assert!(matches!(r.sampler.process(), Process::Flow(_)));
        assert!((r.coverage.mode_radius - 3.0 * 0.1f64.sqrt()).abs() < 1e-15);
    }
}
