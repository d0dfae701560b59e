//! The common result type returned by every estimator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::Error;
use crate::stats::wald_critical_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cox,
    Iv,
    IpwCox,
    Wang,
    PooledIv,
    AdjustedCovariate,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cox => "cox",
            Method::Iv => "iv",
            Method::IpwCox => "ipw_cox",
            Method::Wang => "wang",
            Method::PooledIv => "pooled_iv",
            Method::AdjustedCovariate => "adjusted_covariate",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cox" => Method::Cox,
            "iv" => Method::Iv,
            "ipw_cox" | "ipw" => Method::IpwCox,
            "wang" => Method::Wang,
            "pooled_iv" | "pooled" => Method::PooledIv,
            "adjusted_covariate" => Method::AdjustedCovariate,
            other => return Err(Error::Config(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    Model,
    Sandwich,
    Bootstrap,
    /// No standard error was requested or none could be computed.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapInfo {
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedInstrument {
    pub instrument: String,
    pub reason: String,
}

/// Point estimate on the log-hazard-ratio scale with its uncertainty and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub method: Method,
    pub beta_hat: f64,
    pub hr_hat: f64,
    pub se: f64,
    pub se_kind: SeKind,
    pub ci_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hr_ci_low: f64,
    pub hr_ci_high: f64,
    pub converged: bool,
    pub iterations: usize,
    pub score_at_solution: f64,
    pub n: usize,
    pub events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instrument: Option<String>,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "serialize_extended_f64"
    )]
    pub first_stage_f: Option<f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapInfo>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<FitResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedInstrument>,
}

/// Writes `+inf`/`-inf` as strings so an infinite statistic survives JSON.
fn serialize_extended_f64<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("inf"),
        Some(x) if x.is_infinite() => s.serialize_str("-inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

impl FitResult {
    pub const DEFAULT_CI_LEVEL: f64 = 0.95;

    pub fn new(method: Method, beta_hat: f64, se: f64, se_kind: SeKind) -> Self {
        let mut out = Self {
            method,
            beta_hat,
            hr_hat: beta_hat.exp(),
            se,
            se_kind,
            ci_level: Self::DEFAULT_CI_LEVEL,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            hr_ci_low: f64::NAN,
            hr_ci_high: f64::NAN,
            converged: true,
            iterations: 0,
            score_at_solution: 0.0,
            n: 0,
            events: 0,
            instrument: None,
            first_stage_f: None,
            warnings: Vec::new(),
            bootstrap: None,
            components: Vec::new(),
            excluded: Vec::new(),
        };
        out.recompute_ci();
        out
    }

    /// Recomputes the Wald interval at another confidence level.
    pub fn with_ci_level(mut self, level: f64) -> Self {
        self.ci_level = level;
        self.recompute_ci();
        for c in &mut self.components {
            c.ci_level = level;
            c.recompute_ci();
        }
        self
    }

    /// Replaces the standard error and refreshes the interval.
    pub fn with_se(mut self, se: f64, kind: SeKind) -> Self {
        self.se = se;
        self.se_kind = kind;
        self.recompute_ci();
        self
    }

    fn recompute_ci(&mut self) {
        let z = wald_critical_value(self.ci_level);
        let half = z * self.se;
        self.ci_low = self.beta_hat - half;
        self.ci_high = self.beta_hat + half;
        self.hr_ci_low = self.ci_low.exp();
        self.hr_ci_high = self.ci_high.exp();
    }

    pub fn covers(&self, beta: f64) -> bool {
        self.ci_low <= beta && beta <= self.ci_high
    }

    pub(crate) fn with_counts(mut self, n: usize, events: usize) -> Self {
        self.n = n;
        self.events = events;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_brackets_estimate_and_hr_scale() {
        let f = FitResult::new(Method::Cox, 0.4, 0.1, SeKind::Model);
        assert!(f.ci_low <= f.beta_hat && f.beta_hat <= f.ci_high);
        assert!((f.ci_high - 0.4 - 1.959963984540054 * 0.1).abs() < 1e-9);
        assert!((f.hr_ci_low - f.ci_low.exp()).abs() < 1e-15);
        assert_eq!(f.hr_hat, 0.4f64.exp());
        let g = f.with_ci_level(0.9);
        assert!(g.ci_high - g.ci_low < 2.0 * 1.96 * 0.1);
    }

    #[test]
    fn json_field_names() {
        let mut f = FitResult::new(Method::IpwCox, 0.0, 0.2, SeKind::Model);
        f.first_stage_f = Some(f64::INFINITY);
        let v: serde_json::Value = serde_json::to_value(&f).unwrap();
        for key in [
            "beta_hat", "hr_hat", "se", "ci_low", "ci_high", "ci_level", "method", "converged",
            "iterations", "score_at_solution", "se_kind",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["method"], "ipw_cox");
        assert_eq!(v["se_kind"], "model");
        assert_eq!(v["first_stage_f"], "inf");
    }

    #[test]
    fn method_parse_round_trip() {
        for m in [Method::Cox, Method::Iv, Method::IpwCox, Method::Wang, Method::PooledIv] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("probit".parse::<Method>().is_err());
    }
}
