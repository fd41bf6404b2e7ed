//! Percentile bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_boot: usize,
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n − 1) q`). `sorted` must be ascending.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Percentile interval of the mean.
pub fn bootstrap_ci(values: &[f64], n_boot: usize, level: f64, seed: u64, executor: &Executor) -> Result<BootstrapInterval> {
    bootstrap_ci_with(values, mean, n_boot, level, seed, executor)
}

/// Percentile interval of an arbitrary statistic. Resample `i` draws from
/// its own seed, so the interval does not depend on the executor.
pub fn bootstrap_ci_with<F>(values: &[f64], statistic: F, n_boot: usize, level: f64, seed: u64, executor: &Executor) -> Result<BootstrapInterval>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if values.is_empty() {
        return Err(Error::InvalidInput("bootstrap needs at least one value".into()));
    }
    if n_boot == 0 {
        return Err(Error::Config("bootstrap resample count must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = values.len();
    let mut stats = executor.map(n_boot, |i| {
        let mut rng = rng_from(derive_seed(seed, &[i as u64]));
        let sample: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
        statistic(&sample)
    });
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapInterval {
        estimate: statistic(values),
        lower: quantile_linear(&stats, alpha),
        upper: quantile_linear(&stats, 1.0 - alpha),
        level,
        n_boot,
    })
}
