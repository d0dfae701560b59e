//! Partial-likelihood score kernels, Cox fits, Breslow and Kaplan–Meier curves.
//!
//! Every score in this crate has the form
//!
//! ```text
//! U(β) = Σ_i ω_i δ_i { c_i − S_c(β, z_i) / S_0(β, z_i) }
//! S_c(β, s) = Σ_j ω_j c_j Y_j(s) exp(β l_j + o_j),   S_0 likewise with c ≡ 1
//! ```
//!
//! where `c` is the bracket covariate (treatment, instrument, or measured
//! covariate), `l` is the vector multiplied by β inside the exponential, `o`
//! a fixed offset, and `ω` optional subject weights. `Y_j(s) = I(z_j ≥ s)`.
//! Tied event times share one risk set (Breslow).

use serde::Serialize;

use crate::dataset::{RiskSetIndex, SurvivalDataset};
use crate::error::{Error, Result};
use crate::fit::{FitResult, Method, SeKind};
use crate::solver::{find_roots, Root, SolverOptions};
use crate::stats::{self, CompensatedSum};
use crate::weighting::WeightVector;

/// Configuration of one estimating function over a risk index.
#[derive(Debug, Clone, Copy)]
pub struct ScoreKernel<'a> {
    index: &'a RiskSetIndex,
    covariate: &'a [f64],
    linpred: &'a [f64],
    offset: Option<&'a [f64]>,
    weights: Option<&'a [f64]>,
}

/// Score, its β-derivative, and the squared-residual sum at one β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEval {
    pub value: f64,
    pub derivative: f64,
    /// `Σ_i ω_i² δ_i { c_i − S_c/S_0 }²`, the middle of the sandwich.
    pub squared_residuals: f64,
}

impl<'a> ScoreKernel<'a> {
    pub fn new(index: &'a RiskSetIndex, covariate: &'a [f64], linpred: &'a [f64]) -> Self {
        assert_eq!(covariate.len(), index.len(), "covariate length");
        assert_eq!(linpred.len(), index.len(), "linear predictor length");
        Self {
            index,
            covariate,
            linpred,
            offset: None,
            weights: None,
        }
    }

    pub fn with_offset(mut self, offset: &'a [f64]) -> Self {
        assert_eq!(offset.len(), self.index.len(), "offset length");
        self.offset = Some(offset);
        self
    }

    /// Subject weights; may be signed but must be finite.
    pub fn with_weights(mut self, weights: &'a [f64]) -> Self {
        assert_eq!(weights.len(), self.index.len(), "weight length");
        self.weights = Some(weights);
        self
    }

    /// One backward sweep over the risk index.
    pub fn evaluate(&self, beta: f64) -> Result<ScoreEval> {
        let order = self.index.order();
        let status = self.index.sorted_event();
        let time = self.index.sorted_time();
        let eta = |i: usize| beta * self.linpred[i] + self.offset.map_or(0.0, |o| o[i]);
        // exp() is shift invariant in every ratio, so centre at the maximum.
        let shift = order
            .iter()
            .map(|&i| eta(i))
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::InvalidData("non-finite linear predictor".into()));
        }

        let mut s0 = CompensatedSum::new();
        let mut sc = CompensatedSum::new();
        let mut sl = CompensatedSum::new();
        let mut scl = CompensatedSum::new();
        let mut value = CompensatedSum::new();
        let mut deriv = CompensatedSum::new();
        let mut meat = CompensatedSum::new();

        for group in self.index.tie_groups() {
            for pos in group.clone() {
                let i = order[pos];
                let w = self.weights.map_or(1.0, |w| w[i]);
                let r = w * (eta(i) - shift).exp();
                let c = self.covariate[i];
                let l = self.linpred[i];
                s0.add(r);
                sc.add(r * c);
                sl.add(r * l);
                scl.add(r * c * l);
            }
            let mut ev_weight = CompensatedSum::new();
            let mut has_event = false;
            for pos in group.clone() {
                if status[pos] {
                    has_event = true;
                    ev_weight.add(self.weights.map_or(1.0, |w| w[order[pos]]));
                }
            }
            if !has_event {
                continue;
            }
            let ev_weight = ev_weight.value();
            if ev_weight == 0.0 {
                continue;
            }
            let s0v = s0.value();
            if s0v == 0.0 || !s0v.is_finite() {
                return Err(Error::EmptyRiskSet {
                    time: time[group.start],
                });
            }
            let mean_c = sc.value() / s0v;
            let mean_l = sl.value() / s0v;
            let cov_cl = scl.value() / s0v - mean_c * mean_l;
            for pos in group.clone() {
                if status[pos] {
                    let i = order[pos];
                    let w = self.weights.map_or(1.0, |w| w[i]);
                    let resid = self.covariate[i] - mean_c;
                    value.add(w * resid);
                    meat.add(w * w * resid * resid);
                }
            }
            deriv.add(-ev_weight * cov_cl);
        }
        Ok(ScoreEval {
            value: value.value(),
            derivative: deriv.value(),
            squared_residuals: meat.value(),
        })
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<crate::solver::RootSet> {
        find_roots(
            |b| self.evaluate(b).map(|e| (e.value, e.derivative)),
            opts,
        )
    }
}

pub fn score_value(k: &ScoreKernel<'_>, beta: f64) -> Result<f64> {
    k.evaluate(beta).map(|e| e.value)
}

pub fn score_derivative(k: &ScoreKernel<'_>, beta: f64) -> Result<f64> {
    k.evaluate(beta).map(|e| e.derivative)
}

pub(crate) fn require_nonconstant(values: &[f64], what: &str) -> Result<()> {
    if stats::is_constant(values) {
        Err(Error::Identification(format!("{what} is constant")))
    } else {
        Ok(())
    }
}

/// Picks the root nearest `reference` and notes multiplicity.
pub(crate) fn select_root(
    roots: crate::solver::RootSet,
    reference: impl FnOnce() -> f64,
    warnings: &mut Vec<String>,
) -> Root {
    if roots.is_unique() {
        return roots.roots[0];
    }
    let reference = reference();
    let r = roots.closest_to(reference);
    warnings.push(format!(
        "score has {} roots on the bracket; reporting the one closest to {reference:.4}",
        roots.roots.len()
    ));
    r
}

fn finish_fit(method: Method, d: &SurvivalDataset, root: Root, se: f64, kind: SeKind) -> FitResult {
    let mut f = FitResult::new(method, root.beta, se, kind).with_counts(d.n(), d.n_events());
    f.iterations = root.iterations;
    f.score_at_solution = root.score;
    f
}

/// Standard (or weighted) Cox partial-likelihood fit of the treatment.
///
/// The standard error is model based: `(−∂U/∂β)^{-1/2}` at the root.
pub fn fit_cox(d: &SurvivalDataset, weights: Option<&WeightVector>) -> Result<FitResult> {
    require_nonconstant(d.treatment(), "treatment")?;
    let index = d.risk_index();
    let x = d.treatment();
    let mut kernel = ScoreKernel::new(&index, x, x);
    if let Some(w) = weights {
        w.check_len(d.n())?;
        kernel = kernel.with_weights(&w.values);
    }
    let roots = kernel.solve(&SolverOptions::for_sample_size(d.n()))?;
    let mut warnings = Vec::new();
    let root = select_root(roots, || 0.0, &mut warnings);
    let info = -root.derivative;
    let se = if info > 0.0 { info.recip().sqrt() } else { f64::NAN };
    let method = match weights {
        Some(_) => Method::IpwCox,
        None => Method::Cox,
    };
    let mut f = finish_fit(method, d, root, se, SeKind::Model);
    f.warnings = warnings;
    Ok(f)
}

/// Estimates the coefficient of measured covariate `q_column` with the treatment
/// coefficient held fixed at `beta_x_fixed`.
///
/// The model-based standard error treats `beta_x_fixed` as known; uncertainty in
/// a plugged-in treatment estimate is not propagated.
pub fn fit_adjusted_covariate(
    d: &SurvivalDataset,
    beta_x_fixed: f64,
    q_column: usize,
) -> Result<FitResult> {
    let q = d.covariate(q_column)?;
    require_nonconstant(q, "adjustment covariate")?;
    let index = d.risk_index();
    let offset: Vec<f64> = d.treatment().iter().map(|x| beta_x_fixed * x).collect();
    let kernel = ScoreKernel::new(&index, q, q).with_offset(&offset);
    let roots = kernel.solve(&SolverOptions::for_sample_size(d.n()))?;
    let mut warnings = Vec::new();
    let root = select_root(roots, || 0.0, &mut warnings);
    let info = -root.derivative;
    let se = if info > 0.0 { info.recip().sqrt() } else { f64::NAN };
    let mut f = finish_fit(Method::AdjustedCovariate, d, root, se, SeKind::Model);
    warnings.push(format!(
        "standard error is conditional on the treatment coefficient {beta_x_fixed}"
    ));
    f.warnings = warnings;
    Ok(f)
}

/// Step function evaluated at distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Cumulative hazard; for Kaplan–Meier curves this is the Nelson–Aalen estimate.
    pub cumulative_hazard: Vec<f64>,
}

impl SurvivalCurve {
    /// Value of the survival step function at `t` (right-continuous).
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    pub fn cumulative_hazard_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.cumulative_hazard[k - 1],
        }
    }
}

/// Breslow cumulative baseline hazard `Λ₀(t) = Σ_{s ≤ t} dN(s) / Σ_j Y_j(s) e^{β x_j}`.
pub fn breslow_baseline(d: &SurvivalDataset, beta: f64) -> Result<SurvivalCurve> {
    let index = d.risk_index();
    let order = index.order();
    let status = index.sorted_event();
    let x = d.treatment();
    let mut denom = CompensatedSum::new();
    let mut at_risk = 0usize;
    // Collected backwards, reversed at the end.
    let mut rows: Vec<(f64, usize, usize, f64)> = Vec::new();
    for group in index.tie_groups() {
        for pos in group.clone() {
            denom.add((beta * x[order[pos]]).exp());
            at_risk += 1;
        }
        let events = group.clone().filter(|&p| status[p]).count();
        if events == 0 {
            continue;
        }
        let s0 = denom.value();
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::EmptyRiskSet {
                time: index.sorted_time()[group.start],
            });
        }
        rows.push((index.sorted_time()[group.start], at_risk, events, events as f64 / s0));
    }
    rows.reverse();
    let mut cum = CompensatedSum::new();
    let mut curve = SurvivalCurve {
        times: Vec::with_capacity(rows.len()),
        survival: Vec::with_capacity(rows.len()),
        at_risk: Vec::with_capacity(rows.len()),
        events: Vec::with_capacity(rows.len()),
        cumulative_hazard: Vec::with_capacity(rows.len()),
    };
    for (t, r, e, jump) in rows {
        cum.add(jump);
        let h = cum.value();
        curve.times.push(t);
        curve.at_risk.push(r);
        curve.events.push(e);
        curve.cumulative_hazard.push(h);
        curve.survival.push((-h).exp());
    }
    Ok(curve)
}

/// Product-limit curve over the given rows.
fn product_limit(time: &[f64], status: &[bool], rows: &[usize]) -> SurvivalCurve {
    let mut idx = rows.to_vec();
    idx.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut curve = SurvivalCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        cumulative_hazard: Vec::new(),
    };
    let mut at_risk = idx.len();
    let mut surv = 1.0;
    let mut na = CompensatedSum::new();
    let mut k = 0;
    while k < idx.len() {
        let t = time[idx[k]];
        let mut events = 0;
        let mut leaving = 0;
        while k < idx.len() && time[idx[k]] == t {
            if status[idx[k]] {
                events += 1;
            }
            leaving += 1;
            k += 1;
        }
        if events > 0 {
            surv *= 1.0 - events as f64 / at_risk as f64;
            na.add(events as f64 / at_risk as f64);
            curve.times.push(t);
            curve.survival.push(surv);
            curve.at_risk.push(at_risk);
            curve.events.push(events);
            curve.cumulative_hazard.push(na.value());
        }
        at_risk -= leaving;
    }
    curve
}

/// Grouping for [`kaplan_meier`].
#[derive(Debug, Clone, PartialEq)]
pub enum KmGrouping {
    Pooled,
    /// One curve per distinct treatment value, in ascending order.
    ByTreatment,
    /// Curves for exactly these treatment values; an absent value is an error.
    TreatmentLevels(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCurve {
    pub label: String,
    pub treatment: Option<f64>,
    pub n: usize,
    pub n_events: usize,
    pub person_time: f64,
    /// Events per 100 units of follow-up time.
    pub incidence_per_100: f64,
    pub curve: SurvivalCurve,
}

pub fn kaplan_meier(d: &SurvivalDataset, grouping: &KmGrouping) -> Result<Vec<GroupCurve>> {
    let time = d.time();
    let status = d.status();
    let build = |label: String, level: Option<f64>, rows: Vec<usize>| -> Result<GroupCurve> {
        if rows.is_empty() {
            return Err(Error::InvalidData(format!("group '{label}' is empty")));
        }
        let person_time: f64 = rows.iter().map(|&i| time[i]).collect::<CompensatedSum>().value();
        let n_events = rows.iter().filter(|&&i| status[i]).count();
        Ok(GroupCurve {
            incidence_per_100: if person_time > 0.0 {
                100.0 * n_events as f64 / person_time
            } else {
                f64::NAN
            },
            label,
            treatment: level,
            n: rows.len(),
            n_events,
            person_time,
            curve: product_limit(time, status, &rows),
        })
    };
    let by_level = |level: f64| -> Vec<usize> {
        (0..d.n()).filter(|&i| d.treatment()[i] == level).collect()
    };
    match grouping {
        KmGrouping::Pooled => Ok(vec![build("all".into(), None, (0..d.n()).collect())?]),
        KmGrouping::ByTreatment => {
            let mut levels = d.treatment().to_vec();
            levels.sort_by(|a, b| a.total_cmp(b));
            levels.dedup();
            levels
                .into_iter()
                .map(|l| build(format!("{}={l}", d.names().treatment), Some(l), by_level(l)))
                .collect()
        }
        KmGrouping::TreatmentLevels(levels) => levels
            .iter()
            .map(|&l| build(format!("{}={l}", d.names().treatment), Some(l), by_level(l)))
            .collect(),
    }
}
