use super::{PropensityModel, PropensityTarget, WeightKind, WeightVector};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::stats;

/// Inverse-probability-of-treatment weights `1/p̂` (treated) and `1/(1 − p̂)` (control).
///
/// `stabilized` multiplies by the marginal treatment proportions. `truncation`
/// clamps the weights to the given pair of sample quantiles.
pub fn ipw_weights(
    m: &PropensityModel,
    d: &SurvivalDataset,
    stabilized: bool,
    truncation: Option<(f64, f64)>,
) -> Result<WeightVector> {
    if m.target != PropensityTarget::TreatmentGivenQ {
        return Err(Error::Config(
            "IPW weights need a propensity model for the treatment".into(),
        ));
    }
    let x = d.treatment();
    if !stats::is_binary(x) {
        return Err(Error::Unsupported(
            "IPW weights require a binary 0/1 treatment".into(),
        ));
    }
    if m.fitted_probabilities.len() != d.n() {
        return Err(Error::InvalidData(
            "propensity model was fitted on a different dataset".into(),
        ));
    }
    let treated_share = stats::mean(x);
    let mut values: Vec<f64> = x
        .iter()
        .zip(&m.fitted_probabilities)
        .map(|(&xi, &p)| {
            let (num, den) = if xi == 1.0 {
                (treated_share, p)
            } else {
                (1.0 - treated_share, 1.0 - p)
            };
            if stabilized {
                num / den
            } else {
                1.0 / den
            }
        })
        .collect();

    if let Some((lo, hi)) = truncation {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::Config(format!(
                "truncation quantiles must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
            )));
        }
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let lo_v = stats::quantile_sorted(&sorted, lo);
        let hi_v = stats::quantile_sorted(&sorted, hi);
        for v in &mut values {
            *v = v.clamp(lo_v, hi_v);
        }
    }
    Ok(WeightVector {
        values,
        kind: WeightKind::Ipw,
        truncation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weighting::fit_propensity;

    fn model_with(p: Vec<f64>) -> PropensityModel {
        PropensityModel {
            target: PropensityTarget::TreatmentGivenQ,
            coefficients: vec![0.0],
            column_names: vec!["(intercept)".into()],
            fitted_probabilities: p,
            converged: true,
            iterations: 1,
            separation: false,
            clipped: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn half_propensity() {
        let x = vec![1.0, 0.0, 1.0, 0.0];
        let d = SurvivalDataset::new(vec![1.0; 4], vec![true; 4], x).unwrap();
        let m = model_with(vec![0.5; 4]);
        assert_eq!(ipw_weights(&m, &d, false, None).unwrap().values, vec![2.0; 4]);
        assert_eq!(ipw_weights(&m, &d, true, None).unwrap().values, vec![1.0; 4]);
    }

    #[test]
    fn truncation_clamps_to_quantiles() {
        let n = 201;
        let x: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let d = SurvivalDataset::new(vec![1.0; n], vec![true; n], x.clone()).unwrap();
        // Heavy-tailed: some treated rows with tiny propensity.
        let p: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 1 { 1.0 / (1.0 + i as f64) } else { 0.5 })
            .collect();
        let m = model_with(p);
        let raw = ipw_weights(&m, &d, false, None).unwrap();
        let cut = ipw_weights(&m, &d, false, Some((0.01, 0.99))).unwrap();
        let q99 = stats::quantile(&raw.values, 0.99);
        let max = cut.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, q99);
        assert!(max < raw.values.iter().cloned().fold(f64::MIN, f64::max));
        assert_eq!(cut.truncation, Some((0.01, 0.99)));
    }

    #[test]
    fn continuous_treatment_unsupported() {
        let d = SurvivalDataset::new(vec![1.0; 3], vec![true; 3], vec![0.2, 0.0, 1.0]).unwrap();
        let m = model_with(vec![0.5; 3]);
        assert!(matches!(ipw_weights(&m, &d, false, None), Err(Error::Unsupported(_))));
    }

    #[test]
    fn stabilized_intercept_only_weights_are_unit() {
        let x: Vec<f64> = (0..30).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let d = SurvivalDataset::new(vec![1.0; 30], vec![true; 30], x).unwrap();
        let m = fit_propensity(&d, PropensityTarget::TreatmentGivenQ).unwrap();
        let w = ipw_weights(&m, &d, true, None).unwrap();
        for v in w.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }
}
