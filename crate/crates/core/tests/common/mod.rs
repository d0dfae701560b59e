//! Direct double-sum score oracle and random dataset builders shared by tests.
#![allow(dead_code)]

use hazard_iv_core::rng::CounterRng;
use hazard_iv_core::SurvivalDataset;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Inputs of one weighted score, in original row order.
#[derive(Debug, Clone)]
pub struct ScoreCase {
    pub time: Vec<f64>,
    pub status: Vec<bool>,
    pub covariate: Vec<f64>,
    pub linpred: Vec<f64>,
    pub offset: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `Σ_i ω_i δ_i (c_i − Σ_j ω_j c_j Y_j(t_i) e^{η_j} / Σ_j ω_j Y_j(t_i) e^{η_j})`
/// evaluated literally, one pass over j per event.
pub fn brute_score(c: &ScoreCase, beta: f64) -> (f64, f64) {
    let n = c.time.len();
    let mut value = 0.0;
    let mut deriv = 0.0;
    for i in 0..n {
        if !c.status[i] {
            continue;
        }
        let (mut s0, mut sc, mut sl, mut scl) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..n {
            if c.time[j] >= c.time[i] {
                let r = c.weights[j] * (beta * c.linpred[j] + c.offset[j]).exp();
                s0 += r;
                sc += r * c.covariate[j];
                sl += r * c.linpred[j];
                scl += r * c.covariate[j] * c.linpred[j];
            }
        }
        value += c.weights[i] * (c.covariate[i] - sc / s0);
        deriv -= c.weights[i] * (scl / s0 - sc * sl / (s0 * s0));
    }
    (value, deriv)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Random case with rounded times (so ties occur), a binary linpred, and
/// positive weights.
pub fn random_case(seed: u64, n: usize) -> ScoreCase {
    let mut rng = CounterRng::new(seed, &[0xCA5E]);
    let time: Vec<f64> = (0..n)
        .map(|_| {
            let t: f64 = Exp1.sample(&mut rng);
            (t * 8.0).round() / 8.0
        })
        .collect();
    let mut status: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    status[0] = true;
    let linpred: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let covariate: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let offset: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.3 * z
        })
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    ScoreCase {
        time,
        status,
        covariate,
        linpred,
        offset,
        weights,
    }
}

pub fn dataset_of(c: &ScoreCase) -> SurvivalDataset {
    SurvivalDataset::new(c.time.clone(), c.status.clone(), c.linpred.clone()).unwrap()
}

/// Small confounded dataset with a continuous instrument `w`.
pub fn random_iv_dataset(seed: u64, n: usize) -> SurvivalDataset {
    let mut rng = CounterRng::new(seed, &[0x1F]);
    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = Exp1.sample(&mut rng);
        let wi: f64 = StandardNormal.sample(&mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let xi = if (u - 1.0) + 1.5 * wi + eps < 0.0 { 1.0 } else { 0.0 };
        let e: f64 = Exp1.sample(&mut rng);
        let t = e / (0.5 * u + 0.5) / if xi == 1.0 { 1.5 } else { 1.0 };
        let c: f64 = Exp1.sample(&mut rng);
        let c = 2.0 * c;
        time.push(t.min(c));
        status.push(t <= c);
        x.push(xi);
        w.push(wi);
    }
    status[0] = true;
    SurvivalDataset::new(time, status, x)
        .unwrap()
        .with_instrument("w", w)
        .unwrap()
}
