//! Seeded resampling statistics.
//!
//! Every replicate draws from its own RNG substream derived from
//! `(seed, replicate index)`, so results do not depend on how replicates are
//! scheduled across threads.
//!
//! The permutation test is a stand-in for a studentized-range post-hoc test;
//! its p-values are not comparable to those of Tukey's HSD.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, mean_of_indexed, substream};

/// Significance level echoed in reports.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("bootstrap needs at least one replicate"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Sorted bootstrap means of `values`, one per replicate.
pub fn bootstrap_means(values: &[f64], cfg: &BootstrapConfig) -> Result<Vec<f64>> {
    cfg.check()?;
    let reference = *values.first().ok_or(Error::Empty("bootstrap sample"))?;
    let n = values.len();
    let mut means: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |idx, r| {
                let mut rng = substream(cfg.seed, &[r as u64]);
                idx.clear();
                idx.extend((0..n).map(|_| rng.random_range(0..n)));
                mean_of_indexed(values, idx, reference)
            },
        )
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(means)
}

/// Percentile bootstrap confidence interval for the mean of `values`.
///
/// Endpoints are order statistics of the replicate means, clamped to
/// `[min(values), max(values)]`.
pub fn bootstrap_ci(values: &[f64], cfg: &BootstrapConfig) -> Result<(f64, f64)> {
    let means = bootstrap_means(values, cfg)?;
    let r = means.len();
    let tail = (1.0 - cfg.level) / 2.0;
    let lo_idx = ((tail * r as f64).floor() as usize).min(r - 1);
    let hi_idx = (((1.0 - tail) * r as f64).ceil() as usize)
        .saturating_sub(1)
        .clamp(lo_idx, r - 1);
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok((means[lo_idx].clamp(min, max), means[hi_idx].clamp(min, max)))
}

fn canonical_order(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    a.len().cmp(&b.len()).then_with(|| {
        sa.iter()
            .zip(&sb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Two-sided label-permutation test for a difference of means.
///
/// Returns `(1 + #{|t*| >= |t|}) / (1 + replicates)`, which is never 0.
/// Swapping `a` and `b` yields the same p-value.
pub fn permutation_test(a: &[f64], b: &[f64], replicates: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("permutation test sample"));
    }
    if replicates == 0 {
        return Err(Error::invalid("permutation test needs at least one replicate"));
    }
    let (a, b) = if canonical_order(a, b).is_gt() { (b, a) } else { (a, b) };
    let diff = |x: &[f64], y: &[f64]| mean(x).expect("nonempty") - mean(y).expect("nonempty");
    let observed = diff(a, b).abs();
    // permuted statistics that reproduce the observed split may differ from it
    // by rounding only
    let threshold = observed - 1e-12 * (1.0 + observed);

    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let split = a.len();
    let exceed: usize = (0..replicates)
        .into_par_iter()
        .map_init(
            || pooled.clone(),
            |buf, r| {
                buf.copy_from_slice(&pooled);
                let mut rng = substream(seed, &[r as u64]);
                buf.shuffle(&mut rng);
                let (x, y) = buf.split_at(split);
                usize::from(diff(x, y).abs() >= threshold)
            },
        )
        .sum();
    Ok((1 + exceed) as f64 / (1 + replicates) as f64)
}
