//! Hazard-ratio estimation for a binary treatment with unmeasured confounding.
//!
//! The main entry points are [`fit_cox`], [`fit_iv`], [`fit_pooled_iv`],
//! [`fit_wang`], and the IPW path ([`fit_propensity`] then [`ipw_weights`]
//! then [`fit_cox`] with weights). [`simulation`] holds the synthetic data
//! generator and the Monte Carlo driver.

pub mod cox;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod iv;
pub mod rng;
pub mod simulation;
pub mod solver;
pub mod stats;
pub mod weighting;

pub use cox::{
    breslow_baseline, fit_adjusted_covariate, fit_cox, kaplan_meier, GroupCurve, KmGrouping,
    ScoreEval, ScoreKernel, SurvivalCurve,
};
pub use dataset::{
    build_risk_index, load_csv, read_csv, ColumnMap, ColumnNames, LoadOutcome, NaPolicy,
    RiskSetIndex, SurvivalDataset,
};
pub use error::{Error, Result};
pub use fit::{BootstrapInfo, ExcludedInstrument, FitResult, Method, SeKind};
pub use iv::{first_stage_f, fit_iv, fit_pooled_iv, sandwich_variance, WEAK_INSTRUMENT_F};
pub use simulation::{run_study, sweep, SimConfig, SimSummary};
pub use solver::{find_roots, Root, RootSet, SolverOptions};
pub use weighting::{
    bootstrap_se, fit_propensity, fit_wang, ipw_weights, wang_estimate, wang_weights, BootstrapSe,
    HChoice, PropensityModel, PropensityTarget, WeightKind, WeightVector,
};
