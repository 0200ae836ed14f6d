//! Analytic "pre-trained" generative models.
//!
//! A [`GaussianMixture`] with isotropic components stands in for a trained
//! denoiser: its diffused marginals are again Gaussian mixtures, so the score,
//! the epsilon prediction and the flow velocity are available in closed form.
//!
//! Both corruption conventions are affine, `x = a * x0 + sqrt(n) * eps`:
//!
//! | process   | signal `a`       | noise variance `n` |
//! |-----------|------------------|--------------------|
//! | diffusion | `sqrt(alpha_bar)` | `1 - alpha_bar`    |
//! | flow      | `1 - s`          | `s^2`              |
//!
//! Component `i` therefore maps to mean `a * mu_i` and variance
//! `a^2 * v_i + n`, with weights unchanged.

use std::f64::consts::PI;

use rand::Rng;

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::rng::standard_normal;
use crate::schedules::NoiseSchedule;

/// Which interface a sampler consumes from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Epsilon prediction under the variance-preserving diffusion convention.
    DiffusionEpsilon,
    /// Velocity of the linear path `x_s = (1 - s) x0 + s eps`.
    FlowVelocity,
}

/// Isotropic Gaussian mixture `sum_i w_i N(mu_i, v_i I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    /// Row-major `components x dim`.
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::config(
                "weights",
                "mixture needs at least one component",
            ));
        }
        if means.len() != n || variances.len() != n {
            return Err(Error::config(
                "means",
                format!(
                    "{} weights, {} means and {} variances do not match",
                    n,
                    means.len(),
                    variances.len()
                ),
            ));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::config(
                "means",
                "all means must share a positive dimension",
            ));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("means", "entries must be finite"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("weights", "entries must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("weights", format!("sum to {total}, not 1")));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("variances", "entries must be positive"));
        }
        Ok(GaussianMixture {
            dim,
            weights,
            means: means.into_iter().flatten().collect(),
            variances,
        })
    }

    /// `components` equally weighted 2-D components evenly spaced on a circle
    /// of the given radius, first component on the positive x-axis.
    pub fn ring(components: usize, radius: f64, variance: f64) -> Result<Self> {
        if components == 0 {
            return Err(Error::config("components", "must be at least 1"));
        }
        let means = (0..components)
            .map(|i| {
                let angle = 2.0 * PI * i as f64 / components as f64;
                vec![radius * angle.cos(), radius * angle.sin()]
            })
            .collect();
        let w = 1.0 / components as f64;
        let mut weights = vec![w; components];
        // keep the simplex sum exact
        let rest: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - rest;
        Self::new(weights, means, vec![variance; components])
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::new(vec![1.0], vec![vec![0.0; dim]], vec![1.0]).expect("valid standard normal")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Draws `n` i.i.d. samples and returns them with their component labels.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Batch, Vec<usize>) {
        let mut out = Batch::zeros(n, self.dim);
        let mut labels = Vec::with_capacity(n);
        for row in out.rows_mut() {
            let i = self.draw_component(rng);
            let sd = self.variances[i].sqrt();
            for (x, m) in row.iter_mut().zip(self.mean(i)) {
                *x = m + sd * standard_normal(rng);
            }
            labels.push(i);
        }
        (out, labels)
    }

    fn draw_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }

    /// Marginal of `a * x0 + sqrt(noise_var) * eps`.
    pub fn diffused(&self, signal: f64, noise_var: f64) -> Result<Marginal<'_>> {
        if !(signal.is_finite() && noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::input(format!(
                "invalid corruption: signal {signal}, noise variance {noise_var}"
            )));
        }
        let variances: Vec<f64> = self
            .variances
            .iter()
            .map(|v| signal * signal * v + noise_var)
            .collect();
        let half_d = 0.5 * self.dim as f64;
        let log_coef = self
            .weights
            .iter()
            .zip(&variances)
            .map(|(w, v)| w.ln() - half_d * (2.0 * PI * v).ln())
            .collect();
        Ok(Marginal {
            model: self,
            signal,
            noise_var,
            variances,
            log_coef,
        })
    }

    /// Diffusion marginal at cumulative signal coefficient `alpha_bar`.
    pub fn vp_marginal(&self, alpha_bar: f64) -> Result<Marginal<'_>> {
        if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
            return Err(Error::input(format!(
                "alpha_bar {alpha_bar} is not in (0, 1]"
            )));
        }
        self.diffused(alpha_bar.sqrt(), 1.0 - alpha_bar)
    }

    /// Flow marginal at time `s` in `[0, 1]`.
    pub fn flow_marginal(&self, s: f64) -> Result<Marginal<'_>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::input(format!("flow time {s} is not in [0, 1]")));
        }
        self.diffused(1.0 - s, s * s)
    }

    /// Per-component `(mean, variance)` of the diffused marginal.
    pub fn diffused_params(&self, signal: f64, noise_var: f64) -> Result<Vec<(Vec<f64>, f64)>> {
        let marginal = self.diffused(signal, noise_var)?;
        Ok((0..self.num_components())
            .map(|i| (marginal.component_mean(i), marginal.variances[i]))
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.diffused(1.0, 0.0)
            .expect("identity corruption is valid")
            .log_density(x)
    }
}

/// A diffused mixture: the exact `p_t` of a [`GaussianMixture`].
#[derive(Debug, Clone)]
pub struct Marginal<'a> {
    model: &'a GaussianMixture,
    signal: f64,
    noise_var: f64,
    variances: Vec<f64>,
    log_coef: Vec<f64>,
}

impl Marginal<'_> {
    pub fn component_mean(&self, i: usize) -> Vec<f64> {
        self.model.mean(i).iter().map(|m| self.signal * m).collect()
    }

    pub fn component_variance(&self, i: usize) -> f64 {
        self.variances[i]
    }

    fn sq_dist_to_component(&self, x: &[f64], i: usize) -> f64 {
        x.iter()
            .zip(self.model.mean(i))
            .map(|(xv, m)| {
                let d = xv - self.signal * m;
                d * d
            })
            .sum()
    }

    /// Log of `w_i N(x; m_i, V_i)` for every component, plus their log-sum-exp.
    fn log_terms(&self, x: &[f64], terms: &mut Vec<f64>) -> f64 {
        terms.clear();
        let mut max = f64::NEG_INFINITY;
        for i in 0..self.model.num_components() {
            let lt = self.log_coef[i] - 0.5 * self.sq_dist_to_component(x, i) / self.variances[i];
            max = max.max(lt);
            terms.push(lt);
        }
        let sum: f64 = terms.iter().map(|lt| (lt - max).exp()).sum();
        max + sum.ln()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.model.num_components());
        self.log_terms(x, &mut terms)
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut terms = Vec::with_capacity(self.model.num_components());
        let lse = self.log_terms(x, &mut terms);
        terms.iter_mut().for_each(|lt| *lt = (*lt - lse).exp());
        terms
    }

    /// `sum_i gamma_i(x) * (m_i - x) / V_i`.
    pub fn score_into(&self, x: &[f64], out: &mut [f64]) {
        let gamma = self.responsibilities(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, g) in gamma.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let c = g / self.variances[i];
            for ((o, xv), m) in out.iter_mut().zip(x).zip(self.model.mean(i)) {
                *o += c * (self.signal * m - xv);
            }
        }
    }

    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.score_into(x, &mut out);
        out
    }

    /// Exact `E[x0 | x]`.
    pub fn posterior_mean_x0_into(&self, x: &[f64], out: &mut [f64]) {
        let gamma = self.responsibilities(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, g) in gamma.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let gain = self.signal * self.model.variances[i] / self.variances[i];
            for ((o, xv), m) in out.iter_mut().zip(x).zip(self.model.mean(i)) {
                *o += g * (m + gain * (xv - self.signal * m));
            }
        }
    }

    /// Exact `E[eps | x]` for unit-variance noise `eps`.
    pub fn posterior_mean_noise_into(&self, x: &[f64], out: &mut [f64]) {
        let gamma = self.responsibilities(x);
        let noise_sd = self.noise_var.sqrt();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, g) in gamma.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let gain = noise_sd / self.variances[i];
            for ((o, xv), m) in out.iter_mut().zip(x).zip(self.model.mean(i)) {
                *o += g * gain * (xv - self.signal * m);
            }
        }
    }

    /// Velocity `E[eps | x] - E[x0 | x]` of the linear path; meaningful for
    /// marginals built by [`GaussianMixture::flow_marginal`].
    pub fn velocity_into(&self, x: &[f64], out: &mut [f64]) {
        let gamma = self.responsibilities(x);
        let noise_sd = self.noise_var.sqrt();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, g) in gamma.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let v = self.variances[i];
            let noise_gain = noise_sd / v;
            let x0_gain = self.signal * self.model.variances[i] / v;
            for ((o, xv), m) in out.iter_mut().zip(x).zip(self.model.mean(i)) {
                let resid = xv - self.signal * m;
                *o += g * ((noise_gain - x0_gain) * resid - m);
            }
        }
    }
}

/// `grad_x log p_t(x)` for the diffusion marginal at step `t`.
pub fn score(
    model: &GaussianMixture,
    x: &[f64],
    schedule: &NoiseSchedule,
    t: usize,
) -> Result<Vec<f64>> {
    Ok(model.vp_marginal(schedule.alpha_bar(t))?.score(x))
}

/// `eps_hat = -sqrt(1 - alpha_bar_t) * score`.
pub fn epsilon_pred(
    model: &GaussianMixture,
    x: &[f64],
    schedule: &NoiseSchedule,
    t: usize,
) -> Result<Vec<f64>> {
    let alpha_bar = schedule.alpha_bar(t);
    let scale = -(1.0 - alpha_bar).sqrt();
    let mut eps = score(model, x, schedule, t)?;
    eps.iter_mut().for_each(|e| *e *= scale);
    Ok(eps)
}

/// Flow velocity `u_s(x)` for `s` in `(0, 1]`.
pub fn velocity(model: &GaussianMixture, x: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::input(format!("flow time {s} is not in (0, 1]")));
    }
    let mut out = vec![0.0; x.len()];
    model.flow_marginal(s)?.velocity_into(x, &mut out);
    Ok(out)
}

pub fn log_density_p0(model: &GaussianMixture, x: &[f64]) -> f64 {
    model.log_density(x)
}
