//! Sample-quality metrics: reward statistics, diversity and coverage.

use std::f64::consts::PI;

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::evosearch::{running_best, Event};
use crate::models::GaussianMixture;

/// What counts as covering the reward locus and the pre-trained modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSpec {
    /// In-band half width: a sample is on target when `| |x| - radius | < band_width`.
    pub band_width: f64,
    pub num_angular_bins: usize,
    /// Capture radius around each mixture mode.
    pub mode_radius: f64,
    /// Radius of the target circle.
    pub target_radius: f64,
}

impl CoverageSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_width > 0.0) {
            return Err(Error::config("band_width", "must be positive"));
        }
        if self.num_angular_bins == 0 {
            return Err(Error::config("angular_bins", "must be at least 1"));
        }
        if !(self.mode_radius > 0.0) {
            return Err(Error::config("mode_radius", "must be positive"));
        }
        Ok(())
    }
}

/// Mean Euclidean distance over all unordered pairs.
pub fn diversity_l2(samples: &Batch) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::input("diversity needs at least two samples"));
    }
    let mut total = 0.0;
    for i in 0..n {
        let a = samples.row(i);
        for j in i + 1..n {
            let d2: f64 = a
                .iter()
                .zip(samples.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            total += d2.sqrt();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Fraction of equal-angle bins (over the first two coordinates) that hold
/// at least one in-band sample.
pub fn angular_coverage(samples: &Batch, spec: &CoverageSpec) -> f64 {
    let bins = spec.num_angular_bins;
    let mut hit = vec![false; bins];
    for row in samples.rows() {
        let (x, y) = (row[0], row.get(1).copied().unwrap_or(0.0));
        let r = (x * x + y * y).sqrt();
        if (r - spec.target_radius).abs() >= spec.band_width {
            continue;
        }
        let angle = y.atan2(x).rem_euclid(2.0 * PI);
        let b = ((angle / (2.0 * PI) * bins as f64) as usize).min(bins - 1);
        hit[b] = true;
    }
    hit.iter().filter(|h| **h).count() as f64 / bins as f64
}

/// Fraction of mixture components with at least one sample within
/// `mode_radius` of their mean.
pub fn mode_coverage(samples: &Batch, model: &GaussianMixture, spec: &CoverageSpec) -> f64 {
    let k = model.num_components();
    let covered = (0..k)
        .filter(|&i| {
            let mu = model.mean(i);
            samples.rows().any(|row| {
                row.iter()
                    .zip(mu)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    < spec.mode_radius
            })
        })
        .count();
    covered as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSummary {
    pub mean: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Running best reward at each evaluation event.
    pub curve: Vec<(u64, f64)>,
}

pub fn reward_summary(events: &[Event]) -> Result<RewardSummary> {
    if events.is_empty() {
        return Err(Error::input("reward summary of an empty event log"));
    }
    let n = events.len() as f64;
    let mean = events.iter().map(|e| e.reward).sum::<f64>() / n;
    let var = events
        .iter()
        .map(|e| (e.reward - mean) * (e.reward - mean))
        .sum::<f64>()
        / n;
    Ok(RewardSummary {
        mean,
        max: events
            .iter()
            .map(|e| e.reward)
            .fold(f64::NEG_INFINITY, f64::max),
        std: var.sqrt(),
        curve: running_best(events)?,
    })
}

/// Stacks event coordinates into a batch.
pub fn events_to_batch(events: &[&Event]) -> Result<Batch> {
    Batch::from_rows(&events.iter().map(|e| e.x.as_slice()).collect::<Vec<_>>())
}
