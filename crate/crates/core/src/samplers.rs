//! Reverse-time sampling primitives with NFE accounting.
//!
//! The diffusion sampler is the DDIM family step with cumulative signal
//! coefficients (the stochastic form, `eta > 0`, injects `sigma_t` noise at
//! every step). The flow sampler integrates the linear-path velocity either as
//! an ODE or, with `sigma_s > 0`, as the marginal-preserving SDE
//! `dx = (u - sigma^2/2 * score) ds + sigma dw`, run backward in `s` with
//! Euler-Maruyama.
//!
//! Every step takes one random substream per particle (see [`crate::rng`]).

use std::collections::BTreeSet;

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::models::{GaussianMixture, ModelKind};
use crate::rng::{standard_normal, ParticleRng};
use crate::schedules::{FlowTimeGrid, NoiseSchedule};

/// Counts denoiser and reward evaluations. `model_calls` is the reported NFE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NfeLedger {
    pub model_calls: u64,
    pub reward_calls: u64,
}

impl NfeLedger {
    pub fn add_model_calls(&mut self, n: usize) {
        self.model_calls += n as u64;
    }

    pub fn add_reward_calls(&mut self, n: usize) {
        self.reward_calls += n as u64;
    }
}

/// Observer invoked with `(step, batch)` at each listed step of a denoise run.
pub struct TrajectoryHook<'a> {
    times: BTreeSet<usize>,
    callback: HookFn<'a>,
}

type HookFn<'a> = Box<dyn FnMut(usize, &Batch) + 'a>;

impl<'a> TrajectoryHook<'a> {
    pub fn new(
        times: impl IntoIterator<Item = usize>,
        callback: impl FnMut(usize, &Batch) + 'a,
    ) -> Self {
        TrajectoryHook {
            times: times.into_iter().collect(),
            callback: Box::new(callback),
        }
    }

    pub fn times(&self) -> &BTreeSet<usize> {
        &self.times
    }

    fn fire(&mut self, t: usize, batch: &Batch) {
        if self.times.contains(&t) {
            (self.callback)(t, batch);
        }
    }
}

fn check_rngs(batch: &Batch, rngs: &[ParticleRng]) -> Result<()> {
    if rngs.len() != batch.len() {
        return Err(Error::input(format!(
            "{} random substreams for {} particles",
            rngs.len(),
            batch.len()
        )));
    }
    Ok(())
}

fn check_same_shape(a: &Batch, b: &Batch, what: &str) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::input(format!(
            "{what} has shape {}x{}, expected {}x{}",
            b.len(),
            b.dim(),
            a.len(),
            a.dim()
        )));
    }
    Ok(())
}

fn check_flow_times(s: f64, s_next: f64) -> Result<()> {
    if !(s <= 1.0 && s > s_next && s_next >= 0.0) {
        return Err(Error::input(format!(
            "flow step needs 1 >= s > s_next >= 0, got s={s}, s_next={s_next}"
        )));
    }
    Ok(())
}

/// One DDIM-family step `x_t -> x_{t-1}`:
///
/// `x_{t-1} = sqrt(a_{t-1}) x0_hat + sqrt(1 - a_{t-1} - sigma_t^2) eps_hat + sigma_t xi`
/// with `x0_hat = (x_t - sqrt(1 - a_t) eps_hat) / sqrt(a_t)`.
pub fn ddim_sde_step(
    x_t: &Batch,
    t: usize,
    eps_hat: &Batch,
    schedule: &NoiseSchedule,
    rngs: &mut [ParticleRng],
    ledger: &mut NfeLedger,
) -> Result<Batch> {
    if t == 0 || t > schedule.num_steps() {
        return Err(Error::input(format!("diffusion step {t} out of range")));
    }
    check_same_shape(x_t, eps_hat, "eps_hat")?;
    check_rngs(x_t, rngs)?;
    let a_t = schedule.alpha_bar(t);
    let a_prev = schedule.alpha_bar(t - 1);
    let sigma = schedule.sigma(t);
    let mut radicand = 1.0 - a_prev - sigma * sigma;
    if radicand < -1e-12 {
        return Err(Error::Schedule(format!(
            "negative direction coefficient {radicand} at step {t}"
        )));
    }
    radicand = radicand.max(0.0);
    let dir = radicand.sqrt();
    let sqrt_a_t = a_t.sqrt();
    let sqrt_1m_a_t = (1.0 - a_t).sqrt();
    let sqrt_a_prev = a_prev.sqrt();

    let mut out = x_t.clone();
    for ((row, eps), rng) in out.rows_mut().zip(eps_hat.rows()).zip(rngs.iter_mut()) {
        for (x, e) in row.iter_mut().zip(eps) {
            let x0_hat = (*x - sqrt_1m_a_t * e) / sqrt_a_t;
            *x = sqrt_a_prev * x0_hat + dir * e;
            if sigma > 0.0 {
                *x += sigma * standard_normal(rng);
            }
        }
    }
    ledger.add_model_calls(x_t.len());
    Ok(out)
}

/// Euler step of the flow ODE from `s` down to `s_next`: `x - u * (s - s_next)`.
pub fn flow_ode_step(
    x_s: &Batch,
    s: f64,
    s_next: f64,
    u: &Batch,
    ledger: &mut NfeLedger,
) -> Result<Batch> {
    check_flow_times(s, s_next)?;
    check_same_shape(x_s, u, "velocity")?;
    let dt = s - s_next;
    let mut out = x_s.clone();
    for (row, u_row) in out.rows_mut().zip(u.rows()) {
        for (x, v) in row.iter_mut().zip(u_row) {
            *x -= v * dt;
        }
    }
    ledger.add_model_calls(x_s.len());
    Ok(out)
}

/// Euler-Maruyama step of the reverse flow SDE:
/// `x - (u - sigma^2/2 * score) * dt + sigma * sqrt(dt) * xi`.
///
/// With `sigma_s == 0` this is exactly [`flow_ode_step`] and draws no noise.
#[allow(clippy::too_many_arguments)]
pub fn flow_sde_step(
    x_s: &Batch,
    s: f64,
    s_next: f64,
    u: &Batch,
    score_s: &Batch,
    sigma_s: f64,
    rngs: &mut [ParticleRng],
    ledger: &mut NfeLedger,
) -> Result<Batch> {
    if !(sigma_s >= 0.0 && sigma_s.is_finite()) {
        return Err(Error::input(format!(
            "flow sigma {sigma_s} must be non-negative"
        )));
    }
    if sigma_s == 0.0 {
        return flow_ode_step(x_s, s, s_next, u, ledger);
    }
    check_flow_times(s, s_next)?;
    check_same_shape(x_s, u, "velocity")?;
    check_same_shape(x_s, score_s, "score")?;
    check_rngs(x_s, rngs)?;
    let dt = s - s_next;
    let half_var = 0.5 * sigma_s * sigma_s;
    let noise = sigma_s * dt.sqrt();
    let mut out = x_s.clone();
    for (((row, u_row), sc_row), rng) in out
        .rows_mut()
        .zip(u.rows())
        .zip(score_s.rows())
        .zip(rngs.iter_mut())
    {
        for ((x, v), sc) in row.iter_mut().zip(u_row).zip(sc_row) {
            *x -= (v - half_var * sc) * dt;
            *x += noise * standard_normal(rng);
        }
    }
    ledger.add_model_calls(x_s.len());
    Ok(out)
}

/// Score of the linear-path marginal recovered from its velocity:
/// `grad log p_s(x) = -((1 - s) u + x) / s`.
pub fn score_from_velocity(u: &Batch, x: &Batch, s: f64) -> Result<Batch> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::input(format!(
            "score from velocity needs s in (0, 1], got {s}"
        )));
    }
    check_same_shape(x, u, "velocity")?;
    let mut out = x.clone();
    for (row, u_row) in out.rows_mut().zip(u.rows()) {
        for (o, v) in row.iter_mut().zip(u_row) {
            *o = -((1.0 - s) * v + *o) / s;
        }
    }
    Ok(out)
}

/// Discretized reverse process the model is sampled with.
#[derive(Debug, Clone, PartialEq)]
pub enum Process {
    Diffusion(NoiseSchedule),
    Flow(FlowTimeGrid),
}

/// A "pre-trained" model together with its sampler discretization.
#[derive(Debug, Clone)]
pub struct Sampler {
    model: GaussianMixture,
    process: Process,
}

impl Sampler {
    pub fn new(model: GaussianMixture, process: Process) -> Self {
        Sampler { model, process }
    }

    pub fn model(&self) -> &GaussianMixture {
        &self.model
    }

    pub fn process(&self) -> &Process {
        &self.process
    }

    pub fn kind(&self) -> ModelKind {
        match self.process {
            Process::Diffusion(_) => ModelKind::DiffusionEpsilon,
            Process::Flow(_) => ModelKind::FlowVelocity,
        }
    }

    pub fn num_steps(&self) -> usize {
        match &self.process {
            Process::Diffusion(s) => s.num_steps(),
            Process::Flow(g) => g.num_steps(),
        }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Model output at step `t >= 1`: `eps_hat` for diffusion, velocity for
    /// flow. Not counted; the step that consumes it is.
    pub fn model_output(&self, x: &Batch, t: usize) -> Result<Batch> {
        self.check_step(t)?;
        let mut out = Batch::zeros(x.len(), x.dim());
        match &self.process {
            Process::Diffusion(schedule) => {
                let alpha_bar = schedule.alpha_bar(t);
                let marginal = self.model.vp_marginal(alpha_bar)?;
                let scale = -(1.0 - alpha_bar).sqrt();
                for (o, row) in out.rows_mut().zip(x.rows()) {
                    marginal.score_into(row, o);
                    o.iter_mut().for_each(|v| *v *= scale);
                }
            }
            Process::Flow(grid) => {
                let marginal = self.model.flow_marginal(grid.s_at(t))?;
                for (o, row) in out.rows_mut().zip(x.rows()) {
                    marginal.velocity_into(row, o);
                }
            }
        }
        Ok(out)
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::input(format!(
                "step {t} is outside 1..={}",
                self.num_steps()
            )));
        }
        Ok(())
    }

    /// Advances `x` from `t` to `t - 1` given the model output at `(x, t)`.
    pub fn step_with_output(
        &self,
        x: &Batch,
        t: usize,
        output: &Batch,
        rngs: &mut [ParticleRng],
        ledger: &mut NfeLedger,
    ) -> Result<Batch> {
        match &self.process {
            Process::Diffusion(schedule) => ddim_sde_step(x, t, output, schedule, rngs, ledger),
            Process::Flow(grid) => {
                let s = grid.s_at(t);
                let s_next = grid.s_at(t - 1);
                let sigma = grid.sigma_at(t);
                if sigma == 0.0 {
                    flow_ode_step(x, s, s_next, output, ledger)
                } else {
                    let score = score_from_velocity(output, x, s)?;
                    flow_sde_step(x, s, s_next, output, &score, sigma, rngs, ledger)
                }
            }
        }
    }

    /// One denoising step `t -> t - 1`.
    pub fn step(
        &self,
        x: &Batch,
        t: usize,
        rngs: &mut [ParticleRng],
        ledger: &mut NfeLedger,
    ) -> Result<Batch> {
        let output = self.model_output(x, t)?;
        self.step_with_output(x, t, &output, rngs, ledger)
    }

    /// Denoises `x` from step `from` down to step `to`, firing `hook` at its
    /// listed steps (both endpoints included) before each step is taken.
    pub fn denoise(
        &self,
        x: &Batch,
        from: usize,
        to: usize,
        mut hook: Option<&mut TrajectoryHook<'_>>,
        rngs: &mut [ParticleRng],
        ledger: &mut NfeLedger,
    ) -> Result<Batch> {
        if to > from || from > self.num_steps() {
            return Err(Error::input(format!(
                "cannot denoise from step {from} to {to} with {} steps",
                self.num_steps()
            )));
        }
        if let Some(h) = hook.as_deref() {
            if let Some(bad) = h.times().iter().find(|&&t| t < to || t > from) {
                return Err(Error::config(
                    "hook times",
                    format!("step {bad} is outside [{to}, {from}]"),
                ));
            }
        }
        check_rngs(x, rngs)?;
        let mut current = x.clone();
        for t in (to + 1..=from).rev() {
            if let Some(h) = hook.as_deref_mut() {
                h.fire(t, &current);
            }
            current = self.step(&current, t, rngs, ledger)?;
        }
        if let Some(h) = hook {
            h.fire(to, &current);
        }
        Ok(current)
    }

    /// Noise scale of the intermediate-state mutation at step `t`: the
    /// per-step noise the stochastic sampler injects there.
    pub fn mutation_sigma(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        let sigma = match &self.process {
            Process::Diffusion(schedule) => schedule.sigma(t),
            Process::Flow(grid) => grid.sigma_at(t) * (grid.s_at(t) - grid.s_at(t - 1)).sqrt(),
        };
        if sigma <= 0.0 {
            return Err(Error::config(
                "schedule",
                format!(
                    "sampler injects no noise at step {t}; intermediate mutation needs a \
                     stochastic schedule (eta > 0 or flow_sigma_scale > 0)"
                ),
            ));
        }
        Ok(sigma)
    }

    /// Clean-sample estimate from a model output at step `t`: Tweedie for
    /// diffusion, `x - s * u` for flow.
    pub fn x0_from_output(&self, x: &Batch, t: usize, output: &Batch) -> Result<Batch> {
        self.check_step(t)?;
        check_same_shape(x, output, "model output")?;
        let mut out = x.clone();
        match &self.process {
            Process::Diffusion(schedule) => {
                let a = schedule.alpha_bar(t);
                let (sa, s1m) = (a.sqrt(), (1.0 - a).sqrt());
                for (row, e) in out.rows_mut().zip(output.rows()) {
                    for (v, e) in row.iter_mut().zip(e) {
                        *v = (*v - s1m * e) / sa;
                    }
                }
            }
            Process::Flow(grid) => {
                let s = grid.s_at(t);
                for (row, u) in out.rows_mut().zip(output.rows()) {
                    for (v, u) in row.iter_mut().zip(u) {
                        *v -= s * u;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs `sampler` from `t_start` to clean samples.
pub fn denoise_to_end(
    x_start: &Batch,
    t_start: usize,
    sampler: &Sampler,
    hook: Option<&mut TrajectoryHook<'_>>,
    rngs: &mut [ParticleRng],
    ledger: &mut NfeLedger,
) -> Result<Batch> {
    sampler.denoise(x_start, t_start, 0, hook, rngs, ledger)
}
