//! Monte Carlo study of the estimators under endogenous treatment assignment.
//!
//! [`generate_replicate`] draws one dataset; [`run_study`] fits the requested
//! estimators on `reps` replicates and aggregates bias, spread, coverage, and
//! failure rates; [`sweep`] repeats that over a grid of scenarios.
//!
//! Replicates run in parallel on the ambient rayon pool. Every random draw is
//! keyed by `(seed, replicate, subject, slot)` and aggregation walks the
//! replicates in index order, so summaries are identical for any thread count.

mod dgp;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::fit_cox;
use crate::error::{Error, Result};
use crate::fit::Method;
use crate::iv::{fit_iv, fit_pooled_iv};
use crate::rng::{domain, CounterRng};
use crate::stats;
use crate::weighting::{bootstrap_se, fit_propensity, fit_wang, ipw_weights, HChoice, PropensityTarget};

pub use dgp::{gamma4_cdf, gamma4_cumulative_hazard, generate_replicate, HiddenTruth, SimReplicate};

use rand::RngCore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Strength of the unmeasured confounder in treatment assignment.
    pub alpha_u: f64,
    /// Strength of each instrument in treatment assignment.
    pub alpha_w: f64,
    pub hr_x: f64,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<Method>,
    /// Bootstrap replicates for estimators without an analytic standard error.
    pub boot_reps: usize,
    pub n_instruments: usize,
    #[serde(skip, default)]
    pub wang_h: HChoice,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            alpha_u: 1.0,
            alpha_w: 1.0,
            hr_x: 1.5,
            reps: 500,
            seed: 1,
            estimators: vec![Method::Iv],
            boot_reps: 50,
            n_instruments: 1,
            wang_h: HChoice::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be >= 2, got {}", self.n)));
        }
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if !(self.hr_x > 0.0 && self.hr_x.is_finite()) {
            return Err(Error::Config(format!("hr_x must be positive, got {}", self.hr_x)));
        }
        if !(self.alpha_u >= 0.0 && self.alpha_u.is_finite())
            || !(self.alpha_w >= 0.0 && self.alpha_w.is_finite())
        {
            return Err(Error::Config("alpha_u and alpha_w must be finite and >= 0".into()));
        }
        if self.n_instruments < 1 {
            return Err(Error::Config("n_instruments must be >= 1".into()));
        }
        Ok(())
    }

    pub fn true_beta(&self) -> f64 {
        self.hr_x.ln()
    }
}

/// One estimator's result on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateOutcome {
    Fitted { beta: f64, se: f64 },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub rep: usize,
    pub estimates: Vec<(Method, EstimateOutcome)>,
}

fn replicate_seed(cfg: &SimConfig, rep: usize, method: Method) -> u64 {
    CounterRng::new(cfg.seed, &[domain::SIMULATION, rep as u64, u64::MAX, method as u64]).next_u64()
}

fn fit_one(cfg: &SimConfig, rep: usize, method: Method, data: &crate::SurvivalDataset) -> Result<(f64, f64)> {
    match method {
        Method::Cox => fit_cox(data, None).map(|f| (f.beta_hat, f.se)),
        Method::Iv => fit_iv(data, 0).map(|f| (f.beta_hat, f.se)),
        Method::IpwCox => {
            let m = fit_propensity(data, PropensityTarget::TreatmentGivenQ)?;
            let w = ipw_weights(&m, data, true, None)?;
            fit_cox(data, Some(&w)).map(|f| (f.beta_hat, f.se))
        }
        Method::Wang => {
            let (d2, j) = data.with_dichotomized_instrument(0, 0.0)?;
            let f = fit_wang(&d2, j, cfg.wang_h, cfg.boot_reps, replicate_seed(cfg, rep, method))?;
            Ok((f.beta_hat, f.se))
        }
        Method::PooledIv => {
            let all: Vec<usize> = (0..data.n_instruments()).collect();
            let f = fit_pooled_iv(data, &all)?;
            let se = if cfg.boot_reps >= 2 {
                bootstrap_se(
                    |b| fit_pooled_iv(b, &all).map(|f| f.beta_hat),
                    data,
                    cfg.boot_reps,
                    replicate_seed(cfg, rep, method),
                )?
                .se
            } else {
                f64::NAN
            };
            Ok((f.beta_hat, se))
        }
        Method::AdjustedCovariate => Err(Error::Unsupported(
            "simulated data carry no measured covariate".into(),
        )),
    }
}

/// Generates replicate `rep` and fits every configured estimator on it.
pub fn run_replicate(cfg: &SimConfig, rep: usize) -> ReplicateOutcome {
    let estimates = match generate_replicate(cfg, rep) {
        Ok(sim) => cfg
            .estimators
            .iter()
            .map(|&m| {
                let out = match fit_one(cfg, rep, m, &sim.data) {
                    Ok((beta, se)) => EstimateOutcome::Fitted { beta, se },
                    Err(e) => EstimateOutcome::Failed {
                        reason: e.to_string(),
                    },
                };
                (m, out)
            })
            .collect(),
        Err(e) => cfg
            .estimators
            .iter()
            .map(|&m| {
                (
                    m,
                    EstimateOutcome::Failed {
                        reason: e.to_string(),
                    },
                )
            })
            .collect(),
    };
    ReplicateOutcome { rep, estimates }
}

pub fn run_replicates(cfg: &SimConfig) -> Result<Vec<ReplicateOutcome>> {
    cfg.validate()?;
    if cfg.estimators.is_empty() {
        return Err(Error::Config("no estimators requested".into()));
    }
    Ok((0..cfg.reps)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: Method,
    pub mean_beta: f64,
    pub sd_beta: f64,
    pub bias: f64,
    pub mean_se: f64,
    /// Share of fitted replicates whose 95% Wald interval covers the true log HR.
    pub coverage_95: f64,
    pub failure_fraction: f64,
    pub reps_used: usize,
    pub failures: usize,
    /// Anderson–Darling check of `(β̂ − β)/SE` against normality.
    pub ad_statistic: f64,
    pub ad_p_value: f64,
    /// Standardized estimates `(β̂ − β)/SE` in replicate order.
    #[serde(skip)]
    pub standardized: Vec<f64>,
    #[serde(skip)]
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub true_beta: f64,
    pub estimators: Vec<EstimatorSummary>,
    /// Wall-clock time; excluded from serialized output so files are reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl SimSummary {
    pub fn estimator(&self, m: Method) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == m)
    }
}

pub fn summarize(cfg: &SimConfig, outcomes: &[ReplicateOutcome]) -> SimSummary {
    let truth = cfg.true_beta();
    let z95 = stats::wald_critical_value(0.95);
    let estimators = cfg
        .estimators
        .iter()
        .map(|&m| {
            let mut betas = Vec::new();
            let mut ses = Vec::new();
            let mut covered = 0usize;
            let mut with_se = 0usize;
            let mut standardized = Vec::new();
            let mut failures = 0usize;
            for o in outcomes {
                let Some((_, est)) = o.estimates.iter().find(|(mm, _)| *mm == m) else {
                    failures += 1;
                    continue;
                };
                match est {
                    EstimateOutcome::Fitted { beta, se } => {
                        betas.push(*beta);
                        if se.is_finite() && *se > 0.0 {
                            ses.push(*se);
                            with_se += 1;
                            if (beta - truth).abs() <= z95 * se {
                                covered += 1;
                            }
                            standardized.push((beta - truth) / se);
                        }
                    }
                    EstimateOutcome::Failed { .. } => failures += 1,
                }
            }
            let mean_beta = stats::mean(&betas);
            let ad = stats::anderson_darling_normal(&standardized);
            EstimatorSummary {
                estimator: m,
                mean_beta,
                sd_beta: stats::sample_sd(&betas),
                bias: mean_beta - truth,
                mean_se: stats::mean(&ses),
                coverage_95: if with_se > 0 {
                    covered as f64 / with_se as f64
                } else {
                    f64::NAN
                },
                failure_fraction: failures as f64 / outcomes.len().max(1) as f64,
                reps_used: betas.len(),
                failures,
                ad_statistic: ad.map_or(f64::NAN, |a| a.statistic),
                ad_p_value: ad.map_or(f64::NAN, |a| a.p_value),
                standardized,
                estimates: betas,
            }
        })
        .collect();
    SimSummary {
        config: cfg.clone(),
        true_beta: truth,
        estimators,
        runtime_secs: 0.0,
    }
}

pub fn run_study(cfg: &SimConfig) -> Result<SimSummary> {
    let start = Instant::now();
    let outcomes = run_replicates(cfg)?;
    let mut summary = summarize(cfg, &outcomes);
    summary.runtime_secs = start.elapsed().as_secs_f64();
    Ok(summary)
}

/// Cartesian grid over `(α_U, α_W, HR)` sharing every other setting of `base`.
pub fn grid(alpha_u: &[f64], alpha_w: &[f64], hr_x: &[f64], base: &SimConfig) -> Vec<SimConfig> {
    let mut out = Vec::with_capacity(alpha_u.len() * alpha_w.len() * hr_x.len());
    for &hr in hr_x {
        for &au in alpha_u {
            for &aw in alpha_w {
                out.push(SimConfig {
                    alpha_u: au,
                    alpha_w: aw,
                    hr_x: hr,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// HR values used when a sweep does not specify them.
pub const DEFAULT_HR_GRID: [f64; 3] = [2.0 / 3.0, 1.0, 1.5];

pub fn sweep(cells: &[SimConfig]) -> Result<Vec<SimSummary>> {
    if cells.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    for c in cells {
        c.validate()?;
    }
    cells.iter().map(run_study).collect()
}

/// One long-format row: one cell × one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha_u: f64,
    pub alpha_w: f64,
    pub hr_x: f64,
    pub n: usize,
    pub reps: usize,
    pub estimator: Method,
    pub mean_beta: f64,
    pub sd_beta: f64,
    pub mean_se: f64,
    pub coverage_95: f64,
    pub failure_fraction: f64,
}

pub fn sweep_rows(summaries: &[SimSummary]) -> Vec<SweepRow> {
    summaries
        .iter()
        .flat_map(|s| {
            s.estimators.iter().map(move |e| SweepRow {
                alpha_u: s.config.alpha_u,
                alpha_w: s.config.alpha_w,
                hr_x: s.config.hr_x,
                n: s.config.n,
                reps: s.config.reps,
                estimator: e.estimator,
                mean_beta: e.mean_beta,
                sd_beta: e.sd_beta,
                mean_se: e.mean_se,
                coverage_95: e.coverage_95,
                failure_fraction: e.failure_fraction,
            })
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimators: Vec<Method>) -> SimConfig {
        SimConfig {
            n: 200,
            reps: 12,
            seed: 9,
            estimators,
            boot_reps: 4,
            ..SimConfig::default()
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SimConfig { n: 1, ..SimConfig::default() },
            SimConfig { reps: 0, ..SimConfig::default() },
            SimConfig { hr_x: 0.0, ..SimConfig::default() },
            SimConfig { alpha_u: -1.0, ..SimConfig::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
        let none = SimConfig { estimators: vec![], ..small(vec![]) };
        assert!(run_study(&none).is_err());
    }

    #[test]
    fn summary_accounting() {
        let cfg = small(vec![Method::Cox, Method::Iv, Method::AdjustedCovariate]);
        let s = run_study(&cfg).unwrap();
        for e in &s.estimators {
            assert_eq!(e.reps_used + e.failures, cfg.reps);
            assert!(e.coverage_95.is_nan() || (0.0..=1.0).contains(&e.coverage_95));
        }
        let adj = s.estimator(Method::AdjustedCovariate).unwrap();
        assert_eq!(adj.failure_fraction, 1.0);
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = small(vec![Method::Iv, Method::Wang]);
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn sweep_shape() {
        let base = small(vec![Method::Iv, Method::Cox]);
        let base = SimConfig { reps: 2, n: 100, ..base };
        let cells = grid(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.5], &base);
        assert_eq!(cells.len(), 9);
        let rows = sweep_rows(&sweep(&cells).unwrap());
        assert_eq!(rows.len(), 18);
        assert_eq!(rows.iter().filter(|r| r.estimator == Method::Iv).count(), 9);
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "alpha_u,alpha_w,hr_x,n,reps,estimator,mean_beta,sd_beta,mean_se,coverage_95,failure_fraction\n"
        ));
        assert_eq!(text.lines().count(), 19);
    }

    #[test]
    fn empty_sweep_rejected() {
        assert!(sweep(&[]).is_err());
    }
}
