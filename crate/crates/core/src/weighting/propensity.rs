use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::stats;

/// Fitted probabilities are kept inside `(c, 1 − c)`.
pub const PROBABILITY_CLIP: f64 = 1e-6;

const MAX_ITERATIONS: usize = 50;
const GRADIENT_TOL: f64 = 1e-8;
const SEPARATION_COEF: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityTarget {
    TreatmentGivenQ,
    /// Instrument column index.
    InstrumentGivenQ(usize),
}

/// Logistic regression of a binary target on the measured covariates plus intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityModel {
    pub target: PropensityTarget,
    /// Intercept first, then one coefficient per covariate.
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    /// Clipped to `(PROBABILITY_CLIP, 1 − PROBABILITY_CLIP)`.
    pub fitted_probabilities: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    /// Number of fitted probabilities that hit a clip bound.
    pub clipped: usize,
    pub warnings: Vec<String>,
}

impl PropensityModel {
    /// Probability for a covariate row (without intercept).
    pub fn predict(&self, covariates: &[f64]) -> f64 {
        let eta = self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(covariates)
                .map(|(b, q)| b * q)
                .sum::<f64>();
        clip(expit(eta))
    }
}

#[inline]
pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn clip(p: f64) -> f64 {
    p.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
}

pub(crate) fn design_matrix(d: &SurvivalDataset, rows: &[usize]) -> (DMatrix<f64>, Vec<String>) {
    let k = d.n_covariates() + 1;
    let mut x = DMatrix::zeros(rows.len(), k);
    for (r, &i) in rows.iter().enumerate() {
        x[(r, 0)] = 1.0;
        for (j, col) in d.covariates().iter().enumerate() {
            x[(r, j + 1)] = col[i];
        }
    }
    let mut names = vec!["(intercept)".to_string()];
    names.extend(d.names().covariates.iter().cloned());
    (x, names)
}

/// Greedy pivoted Gram–Schmidt; returns the columns that are linear
/// combinations of earlier ones.
fn aliased_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut aliased = Vec::new();
    for j in 0..x.ncols() {
        let original = x.column(j).into_owned();
        let norm0 = original.norm();
        let mut v = original;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0.max(1.0) {
            aliased.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    aliased
}

#[derive(Debug, Clone)]
pub(crate) struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
}

fn deviance(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut acc = stats::CompensatedSum::new();
    for (e, &yi) in eta.iter().zip(y) {
        acc.add(2.0 * (softplus(*e) - yi * e));
    }
    acc.value()
}

/// Maximum-likelihood logistic regression by iteratively reweighted least squares
/// with step halving on the deviance.
pub(crate) fn logistic_irls(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<LogisticFit> {
    let aliased = aliased_columns(x);
    if !aliased.is_empty() {
        return Err(Error::RankDeficient {
            columns: aliased.iter().map(|&j| names[j].clone()).collect(),
        });
    }
    let k = x.ncols();
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(k);
    let mut dev = deviance(x, y, &beta);
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;

    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let eta = x * &beta;
        let p = eta.map(expit);
        let grad = x.transpose() * (&yv - &p);
        if grad.norm() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        let wts = p.map(|pi| (pi * (1.0 - pi)).max(1e-300));
        let mut xw = x.clone();
        for (mut row, w) in xw.row_iter_mut().zip(wts.iter()) {
            row *= *w;
        }
        let info = x.transpose() * xw;
        let Some(chol) = info.cholesky() else {
            separation = true;
            break;
        };
        let delta = chol.solve(&grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + &delta * step;
            let cd = deviance(x, y, &cand);
            if cd <= dev + 1e-12 * dev.abs().max(1.0) {
                accepted = Some((cand, cd));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cd)) = accepted else {
            break;
        };
        // Diverging coefficients with probabilities pinned at the clip bounds.
        let pinned = (x * &cand)
            .iter()
            .any(|&e| !(PROBABILITY_CLIP..=1.0 - PROBABILITY_CLIP).contains(&expit(e)));
        if pinned && cand.amax() > SEPARATION_COEF && cand.amax() > beta.amax() {
            separation = true;
            beta = cand;
            break;
        }
        beta = cand;
        dev = cd;
    }
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        converged: converged && !separation,
        iterations,
        separation,
    })
}

fn binary_target<'a>(d: &'a SurvivalDataset, target: PropensityTarget) -> Result<(&'a [f64], String)> {
    let (y, name) = match target {
        PropensityTarget::TreatmentGivenQ => (d.treatment(), d.names().treatment.clone()),
        PropensityTarget::InstrumentGivenQ(j) => (d.instrument(j)?, d.instrument_name(j).to_string()),
    };
    if !stats::is_binary(y) {
        return Err(Error::Unsupported(format!(
            "propensity target '{name}' must be binary 0/1"
        )));
    }
    Ok((y, name))
}

pub(crate) fn model_from_fit(
    d: &SurvivalDataset,
    target: PropensityTarget,
    fit: LogisticFit,
    names: Vec<String>,
) -> PropensityModel {
    let mut model = PropensityModel {
        target,
        coefficients: fit.coefficients,
        column_names: names,
        fitted_probabilities: Vec::with_capacity(d.n()),
        converged: fit.converged,
        iterations: fit.iterations,
        separation: fit.separation,
        clipped: 0,
        warnings: Vec::new(),
    };
    let mut row = vec![0.0; d.n_covariates()];
    for i in 0..d.n() {
        for (j, col) in d.covariates().iter().enumerate() {
            row[j] = col[i];
        }
        let eta = model.coefficients[0]
            + model.coefficients[1..].iter().zip(&row).map(|(b, q)| b * q).sum::<f64>();
        let raw = expit(eta);
        let p = clip(raw);
        if p != raw {
            model.clipped += 1;
        }
        model.fitted_probabilities.push(p);
    }
    if model.separation {
        model
            .warnings
            .push("separation detected; coefficients are diverging and fitted probabilities are clipped".into());
    } else if !model.converged {
        model
            .warnings
            .push(format!("IRLS did not converge in {MAX_ITERATIONS} iterations"));
    }
    model
}

/// Fits `P(target = 1 | Q)` on all rows.
pub fn fit_propensity(d: &SurvivalDataset, target: PropensityTarget) -> Result<PropensityModel> {
    let (y, _) = binary_target(d, target)?;
    let rows: Vec<usize> = (0..d.n()).collect();
    let (x, names) = design_matrix(d, &rows);
    let fit = logistic_irls(&x, y, &names)?;
    Ok(model_from_fit(d, target, fit, names))
}

/// Fits the treatment model on a subset of rows (used for within-stratum fits).
pub(crate) fn fit_treatment_on_rows(d: &SurvivalDataset, rows: &[usize]) -> Result<PropensityModel> {
    let (x, names) = design_matrix(d, rows);
    let y: Vec<f64> = rows.iter().map(|&i| d.treatment()[i]).collect();
    let fit = logistic_irls(&x, &y, &names)?;
    Ok(model_from_fit(d, PropensityTarget::TreatmentGivenQ, fit, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use rand::Rng;

    fn dataset_with(x: Vec<f64>, covs: Vec<Vec<f64>>) -> SurvivalDataset {
        let n = x.len();
        let mut d = SurvivalDataset::new(vec![1.0; n], vec![true; n], x).unwrap();
        for (j, c) in covs.into_iter().enumerate() {
            d = d.with_covariate(format!("q{j}"), c).unwrap();
        }
        d
    }

    #[test]
    fn intercept_only_matches_mean() {
        let x: Vec<f64> = (0..50).map(|i| if i % 5 < 2 { 1.0 } else { 0.0 }).collect();
        let m = fit_propensity(&dataset_with(x, vec![]), PropensityTarget::TreatmentGivenQ).unwrap();
        assert!(m.converged);
        for p in &m.fitted_probabilities {
            assert!((p - 0.4).abs() < 1e-10);
        }
    }

    #[test]
    fn separation_flagged() {
        let q: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x: Vec<f64> = (0..20).map(|i| if i >= 10 { 1.0 } else { 0.0 }).collect();
        let m = fit_propensity(&dataset_with(x, vec![q]), PropensityTarget::TreatmentGivenQ).unwrap();
        assert!(m.separation);
        assert!(!m.warnings.is_empty());
        assert!(m.clipped > 0);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let q: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        let q2: Vec<f64> = q.iter().map(|v| 2.0 * v + 1.0).collect();
        let x: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let err = fit_propensity(&dataset_with(x, vec![q, q2]), PropensityTarget::TreatmentGivenQ)
            .unwrap_err();
        match err {
            Error::RankDeficient { columns } => assert_eq!(columns, vec!["q1".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_binary_target_rejected() {
        let d = dataset_with(vec![0.0, 0.5, 1.0], vec![]);
        assert!(matches!(
            fit_propensity(&d, PropensityTarget::TreatmentGivenQ),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn recovers_known_coefficients() {
        let n = 5000;
        let mut rng = CounterRng::new(11, &[]);
        let q: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let x: Vec<f64> = q
            .iter()
            .map(|&qi| {
                let p = expit(1.0 - 0.5 * qi);
                if rng.random::<f64>() < p { 1.0 } else { 0.0 }
            })
            .collect();
        let m = fit_propensity(&dataset_with(x, vec![q]), PropensityTarget::TreatmentGivenQ).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[0] - 1.0).abs() < 0.1, "{:?}", m.coefficients);
        assert!((m.coefficients[1] + 0.5).abs() < 0.1, "{:?}", m.coefficients);
    }

    #[test]
    fn deviance_is_monotone_over_iterations() {
        // Refit with growing iteration caps and check the deviance never rises.
        let n = 300;
        let mut rng = CounterRng::new(5, &[]);
        let q: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let y: Vec<f64> = q
            .iter()
            .map(|&qi| if rng.random::<f64>() < expit(0.3 + 2.0 * qi) { 1.0 } else { 0.0 })
            .collect();
        let d = dataset_with(y.clone(), vec![q]);
        let rows: Vec<usize> = (0..n).collect();
        let (x, _) = design_matrix(&d, &rows);
        let mut beta = DVector::zeros(2);
        let mut prev = deviance(&x, &y, &beta);
        for _ in 0..6 {
            let p = (&x * &beta).map(expit);
            let grad = x.transpose() * (DVector::from_column_slice(&y) - &p);
            let mut xw = x.clone();
            for (mut row, pi) in xw.row_iter_mut().zip(p.iter()) {
                row *= pi * (1.0 - pi);
            }
            beta += (x.transpose() * xw).cholesky().unwrap().solve(&grad);
            let dev = deviance(&x, &y, &beta);
            assert!(dev <= prev + 1e-9);
            prev = dev;
        }
    }
}
