use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::{domain, CounterRng};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSe {
    pub se: f64,
    pub reps: usize,
    pub failures: usize,
    /// Converged replicate estimates in replicate order.
    pub estimates: Vec<f64>,
}

impl BootstrapSe {
    pub fn failure_fraction(&self) -> f64 {
        self.failures as f64 / self.reps as f64
    }
}

/// Row indices of bootstrap replicate `rep`.
pub(crate) fn resample_rows(n: usize, seed: u64, rep: usize) -> Vec<usize> {
    let mut rng = CounterRng::new(seed, &[domain::BOOTSTRAP, rep as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nonparametric row bootstrap of a scalar estimator.
///
/// Replicate `r` resamples rows with a stream keyed by `(seed, r)`, so the
/// result does not depend on how replicates are scheduled across threads.
/// Failed replicates are dropped; more than half failing is an error.
pub fn bootstrap_se<F>(fit_fn: F, d: &SurvivalDataset, reps: usize, seed: u64) -> Result<BootstrapSe>
where
    F: Fn(&SurvivalDataset) -> Result<f64> + Sync,
{
    if reps < 2 {
        return Err(Error::Config("bootstrap needs at least 2 replicates".into()));
    }
    let n = d.n();
    let outcomes: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rows = resample_rows(n, seed, r);
            d.select_rows(&rows)
                .and_then(|b| fit_fn(&b))
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();
    let estimates: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let failures = reps - estimates.len();
    if 2 * failures > reps || estimates.len() < 2 {
        return Err(Error::BootstrapUnreliable { failures, reps });
    }
    Ok(BootstrapSe {
        se: stats::sample_sd(&estimates),
        reps,
        failures,
        estimates,
    })
}
