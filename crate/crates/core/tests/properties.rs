mod common;

use common::random_iv_dataset;
use hazard_iv_core::{
    fit_cox, fit_iv, fit_propensity, ipw_weights, read_csv, ColumnMap, NaPolicy, PropensityTarget,
    SurvivalDataset,
};
use proptest::prelude::*;

fn permuted(d: &SurvivalDataset, key: u64) -> SurvivalDataset {
    let mut rows: Vec<usize> = (0..d.n()).collect();
    // Deterministic shuffle from the proptest-chosen key.
    rows.sort_by_key(|&i| (i as u64 ^ key).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    d.select_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fits_ignore_row_order(seed in 0u64..1000, key in any::<u64>()) {
        let d = random_iv_dataset(seed, 120);
        let p = permuted(&d, key);
        let (a, b) = (fit_cox(&d, None).unwrap(), fit_cox(&p, None).unwrap());
        prop_assert!((a.beta_hat - b.beta_hat).abs() < 1e-9);
        prop_assert!((a.se - b.se).abs() < 1e-9);
        if let (Ok(a), Ok(b)) = (fit_iv(&d, 0), fit_iv(&p, 0)) {
            prop_assert!((a.beta_hat - b.beta_hat).abs() < 1e-9);
            prop_assert!((a.se - b.se).abs() < 1e-9);
        }
    }

    #[test]
    fn iv_is_affine_invariant_in_instrument(
        seed in 0u64..1000,
        a in prop_oneof![-50.0f64..-0.05, 0.05f64..50.0],
        b in -100.0f64..100.0,
    ) {
        let d = random_iv_dataset(seed, 150);
        let w2: Vec<f64> = d.instrument(0).unwrap().iter().map(|w| a * w + b).collect();
        let d2 = d.clone().with_instrument("w2", w2).unwrap();
        if let Ok(base) = fit_iv(&d2, 0) {
            let moved = fit_iv(&d2, 1).unwrap();
            prop_assert!((base.beta_hat - moved.beta_hat).abs() < 1e-9, "{} vs {}", base.beta_hat, moved.beta_hat);
            prop_assert!((base.se - moved.se).abs() < 1e-9);
        }
    }

    #[test]
    fn risk_index_is_non_increasing(seed in 0u64..1000, n in 1usize..200) {
        let d = random_iv_dataset(seed, n);
        let idx = d.risk_index();
        prop_assert!(idx.sorted_time().windows(2).all(|p| p[0] >= p[1]));
        let covered: usize = idx.tie_groups().iter().map(|g| g.len()).sum();
        prop_assert_eq!(covered, n);
        for g in idx.tie_groups() {
            // Events lead within a tie.
            let ev = &idx.sorted_event()[g.clone()];
            prop_assert!(ev.windows(2).all(|p| p[0] || !p[1]));
        }
    }

    #[test]
    fn stabilized_unit_propensity_reduces_to_cox(seed in 0u64..1000) {
        let d = random_iv_dataset(seed, 100);
        let m = fit_propensity(&d, PropensityTarget::TreatmentGivenQ).unwrap();
        let w = ipw_weights(&m, &d, true, None).unwrap();
        let ipw = fit_cox(&d, Some(&w)).unwrap();
        let cox = fit_cox(&d, None).unwrap();
        prop_assert!((ipw.beta_hat - cox.beta_hat).abs() < 1e-10);
    }
}

#[test]
fn loading_is_deterministic() {
    let text = "t,d,x,w\n3,1,1,0.2\n1,0,0,0.5\n2,1,1,-1\n2,1,0,0.1\n0,1,0,3\n";
    let map = ColumnMap::new("t", "d").treatment("x").instrument("w");
    let a = read_csv(text.as_bytes(), &map, NaPolicy::Reject).unwrap().dataset;
    let b = read_csv(text.as_bytes(), &map, NaPolicy::Reject).unwrap().dataset;
    assert_eq!(a, b);
    assert_eq!(a.risk_index(), b.risk_index());
}
