//! Subject weights: propensity-score inverse weighting, the signed IV weights
//! of the binary-instrument weighted Cox estimator, and the row bootstrap used for its standard
//! errors.

mod bootstrap;
mod ipw;
mod propensity;
mod wang;

use serde::Serialize;

use crate::error::{Error, Result};

pub use bootstrap::{bootstrap_se, BootstrapSe};
pub use ipw::ipw_weights;
pub use propensity::{fit_propensity, PropensityModel, PropensityTarget, PROBABILITY_CLIP};
pub use wang::{fit_wang, wang_estimate, wang_weights, HChoice, WangWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Unit,
    Ipw,
    Wang,
}

/// Per-subject weights. IPW weights are non-negative; Wang weights are signed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub kind: WeightKind,
    /// Quantile bounds applied by truncation, if any.
    pub truncation: Option<(f64, f64)>,
}

impl WeightVector {
    pub fn unit(n: usize) -> Self {
        Self {
            values: vec![1.0; n],
            kind: WeightKind::Unit,
            truncation: None,
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            values: vec![value; n],
            kind: WeightKind::Unit,
            truncation: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::InvalidData(format!(
                "weight vector has {} entries, dataset has {n} rows",
                self.values.len()
            )));
        }
        if self.values.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidData("weights must be finite".into()));
        }
        if self.kind != WeightKind::Wang && self.values.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidData("negative weight".into()));
        }
        Ok(())
    }
}
