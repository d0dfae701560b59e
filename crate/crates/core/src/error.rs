use thiserror::Error;

/// Errors raised by loading, fitting, and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("identification error: {0}")]
    Identification(String),

    #[error("score undefined: empty or zero-weight risk set at time {time}")]
    EmptyRiskSet { time: f64 },

    #[error(
        "no sign change of the score on [{lower}, {upper}] (score {score_lower:.6e} .. {score_upper:.6e})"
    )]
    NoSolution {
        lower: f64,
        upper: f64,
        score_lower: f64,
        score_upper: f64,
    },

    #[error(
        "solver did not converge after {iterations} iterations; bracket [{lower}, {upper}], \
         scores {score_lower:.6e} .. {score_upper:.6e}"
    )]
    NonConvergence {
        lower: f64,
        upper: f64,
        score_lower: f64,
        score_upper: f64,
        iterations: usize,
    },

    #[error("weak instrument: score derivative {derivative:.3e} at beta = {beta}")]
    WeakInstrument { beta: f64, derivative: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rank-deficient design; aliased columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("bootstrap unreliable: {failures} of {reps} replicates failed")]
    BootstrapUnreliable { failures: usize, reps: usize },

    #[error("all instruments failed: {0}")]
    AllInstrumentsFailed(String),
}

impl Error {
    /// True for failures of the estimating-equation solver, as opposed to bad input.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::NoSolution { .. }
                | Error::NonConvergence { .. }
                | Error::WeakInstrument { .. }
                | Error::EmptyRiskSet { .. }
                | Error::BootstrapUnreliable { .. }
                | Error::AllInstrumentsFailed(_)
        )
    }

    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Validation { .. } => "validation",
            Error::InvalidData(_) => "invalid_data",
            Error::Io(_) => "io",
            Error::Identification(_) => "identification",
            Error::EmptyRiskSet { .. } => "empty_risk_set",
            Error::NoSolution { .. } => "no_solution",
            Error::NonConvergence { .. } => "non_convergence",
            Error::WeakInstrument { .. } => "weak_instrument",
            Error::Unsupported(_) => "unsupported",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::BootstrapUnreliable { .. } => "bootstrap_unreliable",
            Error::AllInstrumentsFailed(_) => "all_instruments_failed",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
