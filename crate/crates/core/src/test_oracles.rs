//! Exact laws of the discretized samplers for single-Gaussian data.
//!
//! With data `N(mu, v I)` the model output is affine in `x`, so every sampler
//! step maps a Gaussian to a Gaussian. Propagating mean and variance through
//! the steps gives the exact terminal law of the discrete sampler, including
//! its discretization bias. Written independently of the samplers (scalar
//! closed forms, no shared code).

/// Terminal `(mean, variance)` per coordinate of the DDIM-family sampler run
/// from `N(0, 1)` at the last step, for one coordinate with data mean `mu`.
pub fn ddim_gaussian_law(alpha_bar: &[f64], eta: f64, mu: f64, v: f64) -> (f64, f64) {
    let (mut m, mut var) = (0.0, 1.0);
    for t in (1..alpha_bar.len()).rev() {
        let (a, b) = (alpha_bar[t], alpha_bar[t - 1]);
        let sig = eta * ((1.0 - b) / (1.0 - a)).sqrt() * (1.0 - a / b).sqrt();
        let vt = a * v + 1.0 - a;
        let k = (1.0 - a).sqrt() / vt;
        let d = (1.0 - b - sig * sig).max(0.0).sqrt();
        let gain = (b / a).sqrt() * (1.0 - (1.0 - a).sqrt() * k) + d * k;
        let shift = ((b / a).sqrt() * (1.0 - a).sqrt() * k - d * k) * a.sqrt() * mu;
        m = gain * m + shift;
        var = gain * gain * var + sig * sig;
    }
    (m, var)
}

/// Same for the flow sampler on a uniform grid with `sigma_s = c * s`.
pub fn flow_gaussian_law(num_steps: usize, c: f64, mu: f64, v: f64) -> (f64, f64) {
    let (mut m, mut var) = (0.0, 1.0);
    let n = num_steps as f64;
    for k in 0..num_steps {
        let s = 1.0 - k as f64 / n;
        let dt = 1.0 / n;
        let vs = (1.0 - s).powi(2) * v + s * s;
        let g = (s - (1.0 - s) * v) / vs;
        let sig = c * s;
        let drift = g + 0.5 * sig * sig / vs;
        let gain = 1.0 - drift * dt;
        let shift = (drift * (1.0 - s) * mu + mu) * dt;
        m = gain * m + shift;
        var = gain * gain * var + sig * sig * dt;
    }
    (m, var)
}
