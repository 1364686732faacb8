//! Stratified percentile bootstrap.
//!
//! Replicate `r` draws from its own ChaCha8 stream (`seed`, stream `r`), so
//! the interval depends only on the seed, never on how replicates are
//! scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ConfidenceInterval;
use crate::error::{Error, Result};
use crate::summary::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

impl BootstrapConfig {
    pub const MIN_REPLICATES: usize = 100;

    pub fn new(replicates: usize, level: f64, seed: u64) -> Self {
        BootstrapConfig { replicates, level, seed, workers: 0 }
    }
}

/// Percentile interval of `statistic` under resampling with replacement
/// within each label class.
///
/// `statistic` receives indices into the caller's data: all positives of a
/// replicate first, then all negatives. The point estimate is the statistic
/// on the original sample; if it falls outside the percentile interval the
/// nearer bound is moved onto it.
pub fn bootstrap_percentile<F>(labels: &[bool], config: &BootstrapConfig, statistic: F) -> Result<ConfidenceInterval>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::BadLevel(config.level));
    }
    if config.replicates < BootstrapConfig::MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {} replicates, got {}",
            BootstrapConfig::MIN_REPLICATES,
            config.replicates
        )));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateLabels);
    }

    let all: Vec<usize> = pos.iter().chain(&neg).copied().collect();
    let estimate = statistic(&all);

    let replicate = |r: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let mut idx = Vec::with_capacity(all.len());
        idx.extend((0..pos.len()).map(|_| pos[rng.random_range(0..pos.len())]));
        idx.extend((0..neg.len()).map(|_| neg[rng.random_range(0..neg.len())]));
        debug_assert!(idx.iter().any(|&i| labels[i]) && idx.iter().any(|&i| !labels[i]));
        statistic(&idx)
    };

    let mut values: Vec<f64> = if config.workers == 0 {
        (0..config.replicates).into_par_iter().map(replicate).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| (0..config.replicates).into_par_iter().map(replicate).collect())
    };
    if values.iter().any(|v| !v.is_finite()) || !estimate.is_finite() {
        return Err(Error::InvalidArgument("bootstrap statistic returned a non-finite value".into()));
    }
    values.sort_by(f64::total_cmp);

    let alpha = 1.0 - config.level;
    let lower = quantile_sorted(&values, alpha / 2.0);
    let upper = quantile_sorted(&values, 1.0 - alpha / 2.0);
    Ok(ConfidenceInterval {
        estimate,
        lower: lower.min(estimate),
        upper: upper.max(estimate),
        level: config.level,
    })
}
