//! Binary-instrument weighted Cox estimator of Wang, Tchetgen Tchetgen,
//! Martinussen and Vansteelandt.
//!
//! Each subject receives the signed weight
//!
//! ```text
//! ω_i = h(x_i) (2 w_i − 1) / { f̂(w_i | q_i) δ̂(q_i) }
//! ```
//!
//! where `f̂` is a logistic model for the instrument given the covariates and
//! `δ̂(q) = P̂(X = 1 | W = 1, q) − P̂(X = 1 | W = 0, q)` comes from two logistic
//! fits of the treatment within instrument strata. The weights enter both the
//! outer sum over events and the risk-set sums of an otherwise standard Cox
//! score. Signed weights can drive a risk-set sum through zero, which puts
//! poles in the score; when no genuine root exists the fit fails.

use serde::Serialize;

use super::bootstrap::bootstrap_se;
use super::propensity::{fit_propensity, fit_treatment_on_rows, PropensityTarget, PROBABILITY_CLIP};
use super::{WeightKind, WeightVector};
use crate::cox::{fit_cox, require_nonconstant, select_root, ScoreKernel};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::fit::{BootstrapInfo, FitResult, Method, SeKind};
use crate::solver::SolverOptions;
use crate::stats;

/// The treatment function `h(x)` multiplying each weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HChoice {
    /// `h(x) = 1`.
    One,
    /// `h(x) = c` for a positive constant; the root is the same as for `One`.
    Constant(f64),
    /// `h(x) = 2x − 1`, which makes the weighted treated and control risk
    /// sets both estimate complier populations with the same sign.
    #[default]
    Signed,
}

impl HChoice {
    fn eval(&self, x: f64) -> f64 {
        match self {
            HChoice::One => 1.0,
            HChoice::Constant(c) => *c,
            HChoice::Signed => 2.0 * x - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WangWeights {
    pub weights: WeightVector,
    /// Rows whose estimated compliance difference was clipped away from zero.
    pub clipped_compliance: usize,
    /// Rows whose instrument probability hit a clip bound.
    pub clipped_instrument: usize,
    pub warnings: Vec<String>,
}

const MIN_COMPLIANCE: f64 = 1e-6;

fn check_inputs(d: &SurvivalDataset, instrument: usize) -> Result<()> {
    let w = d.instrument(instrument)?;
    if !stats::is_binary(w) {
        return Err(Error::Unsupported(format!(
            "the Wang estimator needs a binary 0/1 instrument; '{}' is not",
            d.instrument_name(instrument)
        )));
    }
    if !stats::is_binary(d.treatment()) {
        return Err(Error::Unsupported(
            "the Wang estimator needs a binary 0/1 treatment".into(),
        ));
    }
    require_nonconstant(d.treatment(), "treatment")?;
    require_nonconstant(w, "instrument")?;
    Ok(())
}

/// Builds the signed subject weights.
pub fn wang_weights(d: &SurvivalDataset, instrument: usize, h: HChoice) -> Result<WangWeights> {
    check_inputs(d, instrument)?;
    if let HChoice::Constant(c) = h {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("h constant must be positive, got {c}")));
        }
    }
    let w = d.instrument(instrument)?;
    let x = d.treatment();
    let f_model = fit_propensity(d, PropensityTarget::InstrumentGivenQ(instrument))?;

    let rows1: Vec<usize> = (0..d.n()).filter(|&i| w[i] == 1.0).collect();
    let rows0: Vec<usize> = (0..d.n()).filter(|&i| w[i] == 0.0).collect();
    let m1 = fit_treatment_on_rows(d, &rows1)?;
    let m0 = fit_treatment_on_rows(d, &rows0)?;

    let mut warnings = Vec::new();
    for (label, m) in [("instrument", &f_model), ("treatment | W=1", &m1), ("treatment | W=0", &m0)] {
        for msg in &m.warnings {
            warnings.push(format!("{label} model: {msg}"));
        }
    }

    let mut clipped_compliance = 0;
    let mut row = vec![0.0; d.n_covariates()];
    let mut values = Vec::with_capacity(d.n());
    for i in 0..d.n() {
        for (j, col) in d.covariates().iter().enumerate() {
            row[j] = col[i];
        }
        let p_w = f_model.fitted_probabilities[i];
        let f_w = if w[i] == 1.0 { p_w } else { 1.0 - p_w };
        let mut delta = m1.predict(&row) - m0.predict(&row);
        if delta.abs() < MIN_COMPLIANCE {
            delta = MIN_COMPLIANCE.copysign(if delta == 0.0 { 1.0 } else { delta });
            clipped_compliance += 1;
        }
        values.push(h.eval(x[i]) * (2.0 * w[i] - 1.0) / (f_w * delta));
    }
    if clipped_compliance > 0 {
        warnings.push(format!(
            "{clipped_compliance} compliance differences clipped to ±{MIN_COMPLIANCE}"
        ));
    }
    if f_model.clipped > 0 {
        warnings.push(format!(
            "{} instrument probabilities clipped at {PROBABILITY_CLIP}",
            f_model.clipped
        ));
    }
    Ok(WangWeights {
        weights: WeightVector {
            values,
            kind: WeightKind::Wang,
            truncation: None,
        },
        clipped_compliance,
        clipped_instrument: f_model.clipped,
        warnings,
    })
}

/// Point estimate only; `se` is NaN.
pub fn wang_estimate(d: &SurvivalDataset, instrument: usize, h: HChoice) -> Result<FitResult> {
    let ww = wang_weights(d, instrument, h)?;
    let index = d.risk_index();
    let x = d.treatment();
    let kernel = ScoreKernel::new(&index, x, x).with_weights(&ww.weights.values);
    let roots = kernel.solve(&SolverOptions::for_sample_size(d.n()))?;
    let mut warnings = ww.warnings;
    let root = select_root(
        roots,
        || fit_cox(d, None).map_or(0.0, |f| f.beta_hat),
        &mut warnings,
    );
    let mut fit = FitResult::new(Method::Wang, root.beta, f64::NAN, SeKind::Unavailable)
        .with_counts(d.n(), d.n_events());
    fit.iterations = root.iterations;
    fit.score_at_solution = root.score;
    fit.instrument = Some(d.instrument_name(instrument).to_string());
    fit.warnings = warnings;
    Ok(fit)
}

/// Point estimate with a bootstrap standard error over `boot_reps` row resamples.
///
/// `boot_reps == 0` skips the bootstrap and leaves the standard error unavailable.
pub fn fit_wang(
    d: &SurvivalDataset,
    instrument: usize,
    h: HChoice,
    boot_reps: usize,
    seed: u64,
) -> Result<FitResult> {
    let fit = wang_estimate(d, instrument, h)?;
    if boot_reps == 0 {
        return Ok(fit);
    }
    let boot = bootstrap_se(
        |b| wang_estimate(b, instrument, h).map(|f| f.beta_hat),
        d,
        boot_reps,
        seed,
    )?;
    let mut fit = fit.with_se(boot.se, SeKind::Bootstrap);
    if boot.failures > 0 {
        fit.warnings.push(format!(
            "{} of {} bootstrap replicates failed",
            boot.failures, boot.reps
        ));
    }
    fit.bootstrap = Some(BootstrapInfo {
        reps: boot.reps,
        failures: boot.failures,
    });
    Ok(fit)
}
