//! Instrumental-variable estimation of the populational log hazard ratio.
//!
//! The instrument score replaces the treatment in the bracket of the Cox
//! score by the instrument while keeping the treatment in the exponential:
//!
//! ```text
//! U_W(β) = Σ_i δ_i { w_i − Σ_j w_j Y_j(z_i) e^{β x_j} / Σ_j Y_j(z_i) e^{β x_j} }
//! ```
//!
//! Its root is consistent for the treatment coefficient of the independent
//! integrated Cox model when `w` is a valid instrument. The variance is the
//! M-estimator sandwich `Σ_i δ_i {w_i − w̄(z_i)}² / (∂U_W/∂β)²`.

use crate::cox::{fit_cox, require_nonconstant, select_root, ScoreKernel};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::fit::{ExcludedInstrument, FitResult, Method, SeKind};
use crate::solver::SolverOptions;
use crate::stats::{self, CompensatedSum};

/// First-stage F below this value flags a weak instrument.
pub const WEAK_INSTRUMENT_F: f64 = 10.0;

const MIN_DERIVATIVE: f64 = 1e-12;

/// Variance of the instrument-score root at `beta`.
pub fn sandwich_variance(d: &SurvivalDataset, instrument: usize, beta: f64) -> Result<f64> {
    let w = d.instrument(instrument)?;
    let index = d.risk_index();
    let eval = ScoreKernel::new(&index, w, d.treatment()).evaluate(beta)?;
    if eval.derivative.abs() < MIN_DERIVATIVE {
        return Err(Error::WeakInstrument {
            beta,
            derivative: eval.derivative,
        });
    }
    Ok(eval.squared_residuals / (eval.derivative * eval.derivative))
}

/// F statistic of the least-squares regression of treatment on one instrument.
///
/// A perfect fit returns `+inf`.
pub fn first_stage_f(d: &SurvivalDataset, instrument: usize) -> Result<f64> {
    let w = d.instrument(instrument)?;
    if d.n() <= 2 {
        return Err(Error::InvalidData("first-stage F needs n > 2".into()));
    }
    require_nonconstant(w, "instrument")?;
    let x = d.treatment();
    if stats::is_constant(x) {
        return Ok(0.0);
    }
    let mx = stats::mean(x);
    let mw = stats::mean(w);
    let mut sxw = CompensatedSum::new();
    let mut sww = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    for (a, b) in x.iter().zip(w) {
        sxw.add((a - mx) * (b - mw));
        sww.add((b - mw) * (b - mw));
        sxx.add((a - mx) * (a - mx));
    }
    let ss_model = sxw.value() * sxw.value() / sww.value();
    let ss_resid = (sxx.value() - ss_model).max(0.0);
    if ss_resid <= 1e-14 * sxx.value() {
        return Ok(f64::INFINITY);
    }
    Ok(ss_model / (ss_resid / (d.n() - 2) as f64))
}

/// Solves the instrument score and attaches the sandwich standard error.
pub fn fit_iv(d: &SurvivalDataset, instrument: usize) -> Result<FitResult> {
    let w = d.instrument(instrument)?;
    require_nonconstant(d.treatment(), "treatment")?;
    require_nonconstant(w, "instrument")?;
    let f_stat = first_stage_f(d, instrument)?;

    let index = d.risk_index();
    let kernel = ScoreKernel::new(&index, w, d.treatment());
    let roots = kernel.solve(&SolverOptions::for_sample_size(d.n()))?;
    let mut warnings = Vec::new();
    let root = select_root(
        roots,
        || fit_cox(d, None).map_or(0.0, |f| f.beta_hat),
        &mut warnings,
    );
    if root.derivative.abs() < MIN_DERIVATIVE {
        return Err(Error::WeakInstrument {
            beta: root.beta,
            derivative: root.derivative,
        });
    }
    let eval = kernel.evaluate(root.beta)?;
    let var = eval.squared_residuals / (eval.derivative * eval.derivative);

    if f_stat < WEAK_INSTRUMENT_F {
        warnings.push(format!(
            "weak instrument: first-stage F = {f_stat:.2} < {WEAK_INSTRUMENT_F}"
        ));
    }
    let mut fit =
        FitResult::new(Method::Iv, root.beta, var.sqrt(), SeKind::Sandwich).with_counts(d.n(), d.n_events());
    fit.iterations = root.iterations;
    fit.score_at_solution = root.score;
    fit.instrument = Some(d.instrument_name(instrument).to_string());
    fit.first_stage_f = Some(f_stat);
    fit.warnings = warnings;
    Ok(fit)
}

/// Inverse-standard-error weighted mean `Σ β_m/s_m / Σ 1/s_m`.
pub fn pool_estimates(estimates: &[(f64, f64)]) -> Option<f64> {
    if estimates.is_empty() {
        return None;
    }
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for &(beta, se) in estimates {
        num.add(beta / se);
        den.add(se.recip());
    }
    Some(num.value() / den.value())
}

/// Pools per-instrument fits; instruments whose fit fails are excluded and listed.
///
/// No analytic standard error is attached (`se` is NaN, `se_kind` unavailable);
/// callers wanting one use [`crate::weighting::bootstrap_se`] around this function.
pub fn fit_pooled_iv(d: &SurvivalDataset, instruments: &[usize]) -> Result<FitResult> {
    if instruments.is_empty() {
        return Err(Error::Config("pooled IV needs at least one instrument".into()));
    }
    let mut components = Vec::new();
    let mut excluded = Vec::new();
    for &j in instruments {
        match fit_iv(d, j) {
            Ok(f) if f.se.is_finite() && f.se > 0.0 => components.push(f),
            Ok(f) => excluded.push(ExcludedInstrument {
                instrument: d.instrument_name(j).to_string(),
                reason: format!("non-positive standard error {}", f.se),
            }),
            Err(e) => excluded.push(ExcludedInstrument {
                instrument: d.instrument_name(j).to_string(),
                reason: e.to_string(),
            }),
        }
    }
    let pairs: Vec<(f64, f64)> = components.iter().map(|f| (f.beta_hat, f.se)).collect();
    let Some(beta) = pool_estimates(&pairs) else {
        let reasons: Vec<String> = excluded
            .iter()
            .map(|e| format!("{}: {}", e.instrument, e.reason))
            .collect();
        return Err(Error::AllInstrumentsFailed(reasons.join("; ")));
    };
    let mut fit = FitResult::new(Method::PooledIv, beta, f64::NAN, SeKind::Unavailable)
        .with_counts(d.n(), d.n_events());
    fit.iterations = components.iter().map(|c| c.iterations).sum();
    fit.score_at_solution = f64::NAN;
    fit.warnings = excluded
        .iter()
        .map(|e| format!("instrument '{}' excluded: {}", e.instrument, e.reason))
        .collect();
    fit.components = components;
    fit.excluded = excluded;
    Ok(fit)
}
