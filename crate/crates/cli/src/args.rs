use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hazard_iv_core::{HChoice, Method};

#[derive(Debug, Parser)]
#[command(
    name = "hazard-iv",
    version,
    about = "Hazard-ratio estimation for a binary treatment under unmeasured confounding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one or more estimators to a CSV dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo study for one scenario.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study over a grid of scenarios.
    Sweep(SweepArgs),
    /// Kaplan–Meier curves, optionally by treatment group.
    Km(KmArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NaArg {
    /// Fail on the first missing value in a bound column.
    Reject,
    /// Drop rows with a missing value in any bound column.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WangH {
    /// h(x) = 1
    One,
    /// h(x) = 2x − 1
    Signed,
}

impl From<WangH> for HChoice {
    fn from(h: WangH) -> Self {
        match h {
            WangH::One => HChoice::One,
            WangH::Signed => HChoice::Signed,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Column holding follow-up times.
    #[arg(long)]
    pub time: String,
    /// Column holding the event indicator (1 event, 0 censored).
    #[arg(long)]
    pub status: String,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
    #[arg(long, value_enum, default_value_t = NaArg::Reject)]
    pub na: NaArg,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; defaults to json for fit and simulate, csv for sweep and km.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Binary treatment column.
    #[arg(long)]
    pub treatment: String,
    /// Instrument column; repeat for several instruments.
    #[arg(long)]
    pub instrument: Vec<String>,
    /// Measured covariates, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Estimator: cox, iv, ipw_cox, wang, pooled_iv. Repeatable.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Seed for bootstrap resampling.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Bootstrap replicates for wang and pooled_iv standard errors.
    #[arg(long, default_value_t = 500)]
    pub boot_reps: usize,
    /// Dichotomize the first instrument at this value for wang when no binary
    /// instrument is given.
    #[arg(long)]
    pub wang_threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = WangH::Signed)]
    pub wang_h: WangH,
    /// Quantile pair for truncating IPW weights, e.g. 0.01,0.99.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub ipw_truncate: Option<Vec<f64>>,
    /// Use raw rather than stabilized IPW weights.
    #[arg(long)]
    pub unstabilized: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Subjects per replicate.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Estimators to run; defaults to iv.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
    /// Bootstrap replicates for wang and pooled_iv standard errors.
    #[arg(long, default_value_t = 50)]
    pub boot_reps: usize,
    /// Independent instruments in the generator.
    #[arg(long, default_value_t = 1)]
    pub instruments: usize,
    #[arg(long, value_enum, default_value_t = WangH::Signed)]
    pub wang_h: WangH,
    /// Suppress progress messages on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "1", value_parser = parse_number)]
    pub alpha_u: f64,
    #[arg(long, default_value = "1", value_parser = parse_number)]
    pub alpha_w: f64,
    #[arg(long, default_value = "1.5", value_parser = parse_number)]
    pub hr: f64,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_number)]
    pub alpha_u: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_number)]
    pub alpha_w: Vec<f64>,
    /// Hazard ratios; fractions such as 2/3 are accepted.
    #[arg(long, value_delimiter = ',', default_value = "2/3,1,3/2", value_parser = parse_number)]
    pub hr: Vec<f64>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct KmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Treatment column; curves are grouped by its values unless --pooled.
    #[arg(long)]
    pub treatment: Option<String>,
    /// One curve for all subjects.
    #[arg(long, conflicts_with = "levels")]
    pub pooled: bool,
    /// Treatment values to report; a level with no subjects is an error.
    #[arg(long, value_delimiter = ',', value_parser = parse_number, requires = "treatment")]
    pub levels: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// A decimal number or a fraction `a/b`.
fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad number '{s}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad number '{s}'"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("bad number '{s}'"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not a finite number"))
    }
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be one ASCII character, got '{s}'")),
    }
}
