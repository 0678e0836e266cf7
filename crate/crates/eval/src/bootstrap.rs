//! Paired percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    /// Observed mean of `a - b`.
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BootstrapInterval {
    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }
}

/// Percentile interval at `level` for the mean paired difference `a - b`.
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, level: f64, seed: u64) -> Result<BootstrapInterval> {
    if a.len() != b.len() || a.is_empty() {
        return invalid(format!("paired samples of length {} and {}", a.len(), b.len()));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return invalid("need at least one resample and a level in (0, 1)");
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| d[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok(BootstrapInterval {
        mean: d.iter().sum::<f64>() / n as f64,
        lo: pick(tail),
        hi: pick(1.0 - tail),
    })
}
