//! Rewards on clean samples and the fitness estimate used by the search.

use std::fmt;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::models::GaussianMixture;
use crate::rng::ParticleRng;
use crate::samplers::{denoise_to_end, NfeLedger, Sampler};

/// Arithmetic reward over sample coordinates, e.g. `-math::abs(x^2 + y^2 - 4)`.
///
/// Coordinates are bound as `x0, x1, ...`; in two and three dimensions `x`,
/// `y` (and `z`) are bound as well. `pi` is predefined. Functions follow the
/// `evalexpr` builtins (`math::abs`, `math::sqrt`, `math::exp`, `math::ln`,
/// `min`, `max`, ...), and `^` is exponentiation.
#[derive(Clone)]
pub struct CustomExpression {
    source: String,
    tree: Node<DefaultNumericTypes>,
    dim: usize,
}

impl CustomExpression {
    /// Parses `source` and checks that it evaluates to a number at the origin.
    pub fn parse(source: &str, dim: usize) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::config("reward.expression", e.to_string()))?;
        let expr = CustomExpression {
            source: source.to_string(),
            tree,
            dim,
        };
        expr.try_eval(&vec![0.0; dim])
            .map_err(|e| Error::config("reward.expression", e))?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, x: &[f64]) -> std::result::Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let mut bind = |name: &str, v: f64| {
            ctx.set_value(name.into(), Value::Float(v))
                .map_err(|e| e.to_string())
        };
        bind("pi", std::f64::consts::PI)?;
        for (i, v) in x.iter().enumerate() {
            bind(&format!("x{i}"), *v)?;
        }
        if self.dim <= 3 {
            for (name, v) in ["x", "y", "z"].iter().zip(x) {
                bind(name, *v)?;
            }
        }
        match self
            .tree
            .eval_with_context(&ctx)
            .map_err(|e| e.to_string())?
        {
            Value::Float(f) => Ok(f),
            Value::Int(i) => Ok(i as f64),
            other => Err(format!("expression evaluated to non-numeric {other:?}")),
        }
    }
}

impl fmt::Debug for CustomExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomExpression")
            .field("source", &self.source)
            .field("dim", &self.dim)
            .finish()
    }
}

impl PartialEq for CustomExpression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.dim == other.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardFn {
    /// `-| |x|^2 - radius^2 |`, maximal (0) on the circle.
    Circle {
        radius: f64,
    },
    /// Log-density of a reference mixture.
    MixtureLogDensity(GaussianMixture),
    /// Zero inside the band `| |x - center| - radius | <= width / 2`, minus the
    /// distance to the band outside it.
    RadialBand {
        center: Vec<f64>,
        radius: f64,
        width: f64,
    },
    Expression(CustomExpression),
    /// Constant reward, handy for testing tie rules.
    Constant(f64),
}

impl RewardFn {
    /// Reward of one clean sample. Expression evaluation failures score
    /// `-inf`, the worst possible reward.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            RewardFn::Circle { radius } => {
                let sq: f64 = x.iter().map(|v| v * v).sum();
                -(sq - radius * radius).abs()
            }
            RewardFn::MixtureLogDensity(m) => m.log_density(x),
            RewardFn::RadialBand {
                center,
                radius,
                width,
            } => {
                let dist = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                -((dist - radius).abs() - 0.5 * width).max(0.0)
            }
            RewardFn::Expression(e) => e.try_eval(x).unwrap_or(f64::NEG_INFINITY),
            RewardFn::Constant(c) => *c,
        }
    }

    /// Describes the reward for result files and compatibility checks.
    pub fn describe(&self) -> String {
        match self {
            RewardFn::Circle { radius } => format!("circle(radius={radius})"),
            RewardFn::MixtureLogDensity(m) => {
                format!("mixture_logdensity(components={})", m.num_components())
            }
            RewardFn::RadialBand {
                center,
                radius,
                width,
            } => format!("radial_band(center={center:?},radius={radius},width={width})"),
            RewardFn::Expression(e) => format!("expression({})", e.source()),
            RewardFn::Constant(c) => format!("constant({c})"),
        }
    }
}

/// Elementwise reward of clean samples; counts one reward call per sample.
pub fn reward(f: &RewardFn, x0: &Batch, ledger: &mut NfeLedger) -> Vec<f64> {
    ledger.add_reward_calls(x0.len());
    x0.rows().map(|row| f.evaluate(row)).collect()
}

/// Single-rollout estimate of `E[r(x0) | x_t]`: each particle is denoised once
/// and its clean sample scored. Returns the rewards and the clean samples.
pub fn fitness(
    x_t: &Batch,
    t: usize,
    sampler: &Sampler,
    f: &RewardFn,
    rngs: &mut [ParticleRng],
    ledger: &mut NfeLedger,
) -> Result<(Vec<f64>, Batch)> {
    let x0 = denoise_to_end(x_t, t, sampler, None, rngs, ledger)?;
    let r = reward(f, &x0, ledger);
    Ok((r, x0))
}

/// Unnormalized reward-tilted target `log p0(x) + r(x) / alpha`.
#[derive(Debug, Clone)]
pub struct TargetDistribution {
    pub base: GaussianMixture,
    pub reward: RewardFn,
    alpha: f64,
}

impl TargetDistribution {
    pub fn new(base: GaussianMixture, reward: RewardFn, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::config("alpha", format!("{alpha} must be positive")));
        }
        Ok(TargetDistribution {
            base,
            reward,
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn log_target_unnormalized(td: &TargetDistribution, x: &Batch) -> Vec<f64> {
    x.rows()
        .map(|row| td.base.log_density(row) + td.reward.evaluate(row) / td.alpha)
        .collect()
}
