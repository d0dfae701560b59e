use std::io::Write;

use hazard_iv_core::simulation::{self, sweep_rows, write_rows_csv};
use hazard_iv_core::stats::is_binary;
use hazard_iv_core::{
    bootstrap_se, fit_cox, fit_iv, fit_pooled_iv, fit_propensity, fit_wang, ipw_weights, kaplan_meier,
    load_csv, run_study, ColumnMap, Error, FitResult, KmGrouping, LoadOutcome, Method, NaPolicy,
    PropensityTarget, SeKind, SimConfig, SimSummary, SurvivalDataset,
};
use serde::Serialize;

use crate::args::{DataArgs, FitArgs, Format, KmArgs, NaArg, OutputArgs, SimulateArgs, StudyArgs, SweepArgs};

/// A failed invocation: exit code plus the machine-readable error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    #[serde(skip)]
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn input(kind: &str, message: impl Into<String>) -> Self {
        Self {
            exit_code: 1,
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            exit_code: if e.is_convergence_failure() { 2 } else { 1 },
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input("io", e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

fn emit(output: &OutputArgs, bytes: &[u8]) -> Result<(), Failure> {
    match &output.out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| Failure::input("io", format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::input("io", e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::input("io", e.to_string())
}

fn load(data: &DataArgs, map: ColumnMap) -> Result<LoadOutcome, Failure> {
    let na = match data.na {
        NaArg::Reject => NaPolicy::Reject,
        NaArg::Drop => NaPolicy::Drop,
    };
    Ok(load_csv(&data.data, &map.delimiter(data.delimiter), na)?)
}

#[derive(Debug, Serialize)]
struct MethodFailure {
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    instrument: Option<String>,
    kind: String,
    message: String,
    #[serde(skip)]
    exit_code: i32,
}

#[derive(Debug, Serialize)]
struct FitReport {
    n: usize,
    events: usize,
    dropped_rows: usize,
    results: Vec<FitResult>,
    failures: Vec<MethodFailure>,
}

#[derive(Debug, Serialize)]
struct FitRow<'a> {
    method: Method,
    instrument: Option<&'a str>,
    beta_hat: Option<f64>,
    se: Option<f64>,
    se_kind: Option<SeKind>,
    ci_level: f64,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    hr_hat: Option<f64>,
    hr_ci_low: Option<f64>,
    hr_ci_high: Option<f64>,
    first_stage_f: Option<f64>,
    converged: bool,
    iterations: Option<usize>,
    n: usize,
    events: usize,
    warnings: String,
    error: Option<&'a str>,
}

fn default_methods(args: &FitArgs) -> Vec<Method> {
    if !args.method.is_empty() {
        let mut seen = Vec::new();
        for &m in &args.method {
            if !seen.contains(&m) {
                seen.push(m);
            }
        }
        return seen;
    }
    if args.instrument.is_empty() {
        vec![Method::Cox]
    } else {
        vec![Method::Cox, Method::Iv]
    }
}

fn check_fit_args(args: &FitArgs, methods: &[Method]) -> Result<(), Failure> {
    if !(args.ci_level > 0.0 && args.ci_level < 1.0) {
        return Err(Failure::input(
            "config",
            format!("--ci-level must lie in (0, 1), got {}", args.ci_level),
        ));
    }
    for m in methods {
        match m {
            Method::Iv | Method::Wang | Method::PooledIv if args.instrument.is_empty() => {
                return Err(Failure::input(
                    "config",
                    format!("method {m} needs at least one --instrument"),
                ));
            }
            Method::AdjustedCovariate => {
                return Err(Failure::input(
                    "config",
                    "method adjusted_covariate is library-only; choose from cox, iv, ipw_cox, wang, pooled_iv",
                ));
            }
            _ => {}
        }
    }
    if let Some(q) = &args.ipw_truncate {
        if q.len() != 2 {
            return Err(Failure::input("config", "--ipw-truncate takes two quantiles"));
        }
    }
    Ok(())
}

/// Index of the instrument used by the Wang fit, dichotomizing when asked.
fn wang_input(d: &SurvivalDataset, threshold: Option<f64>) -> Result<(SurvivalDataset, usize), Error> {
    if let Some(t) = threshold {
        return d.with_dichotomized_instrument(0, t);
    }
    for j in 0..d.n_instruments() {
        if is_binary(d.instrument(j)?) {
            return Ok((d.clone(), j));
        }
    }
    Err(Error::Unsupported(
        "wang needs a binary 0/1 instrument; pass one with --instrument or set --wang-threshold".into(),
    ))
}

fn run_method(args: &FitArgs, d: &SurvivalDataset, m: Method) -> Vec<Result<FitResult, (Option<String>, Error)>> {
    let name = |j: usize| Some(d.instrument_name(j).to_string());
    match m {
        Method::Cox => vec![fit_cox(d, None).map_err(|e| (None, e))],
        Method::Iv => (0..d.n_instruments())
            .map(|j| fit_iv(d, j).map_err(|e| (name(j), e)))
            .collect(),
        Method::IpwCox => {
            let r = fit_propensity(d, PropensityTarget::TreatmentGivenQ).and_then(|p| {
                let trunc = args.ipw_truncate.as_ref().map(|q| (q[0], q[1]));
                let w = ipw_weights(&p, d, !args.unstabilized, trunc)?;
                let mut f = fit_cox(d, Some(&w))?;
                f.warnings.extend(p.warnings.iter().map(|w| format!("propensity model: {w}")));
                Ok(f)
            });
            vec![r.map_err(|e| (None, e))]
        }
        Method::Wang => {
            let r = wang_input(d, args.wang_threshold).and_then(|(dw, j)| {
                fit_wang(&dw, j, args.wang_h.into(), args.boot_reps, args.seed)
            });
            vec![r.map_err(|e| (None, e))]
        }
        Method::PooledIv => {
            let all: Vec<usize> = (0..d.n_instruments()).collect();
            let r = fit_pooled_iv(d, &all).and_then(|f| {
                if args.boot_reps < 2 {
                    return Ok(f);
                }
                let b = bootstrap_se(
                    |s| fit_pooled_iv(s, &all).map(|f| f.beta_hat),
                    d,
                    args.boot_reps,
                    args.seed,
                )?;
                let mut f = f.with_se(b.se, SeKind::Bootstrap);
                f.bootstrap = Some(hazard_iv_core::BootstrapInfo {
                    reps: b.reps,
                    failures: b.failures,
                });
                Ok(f)
            });
            vec![r.map_err(|e| (None, e))]
        }
        Method::AdjustedCovariate => unreachable!("rejected in argument checks"),
    }
}

fn nan_to_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn fit_csv(report: &FitReport, ci_level: f64) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for f in &report.results {
        w.serialize(FitRow {
            method: f.method,
            instrument: f.instrument.as_deref(),
            beta_hat: nan_to_none(f.beta_hat),
            se: nan_to_none(f.se),
            se_kind: Some(f.se_kind),
            ci_level: f.ci_level,
            ci_low: nan_to_none(f.ci_low),
            ci_high: nan_to_none(f.ci_high),
            hr_hat: nan_to_none(f.hr_hat),
            hr_ci_low: nan_to_none(f.hr_ci_low),
            hr_ci_high: nan_to_none(f.hr_ci_high),
            first_stage_f: f.first_stage_f,
            converged: f.converged,
            iterations: Some(f.iterations),
            n: f.n,
            events: f.events,
            warnings: f.warnings.join("; "),
            error: None,
        })
        .map_err(csv_failure)?;
    }
    for e in &report.failures {
        w.serialize(FitRow {
            method: e.method,
            instrument: e.instrument.as_deref(),
            beta_hat: None,
            se: None,
            se_kind: None,
            ci_level,
            ci_low: None,
            ci_high: None,
            hr_hat: None,
            hr_ci_low: None,
            hr_ci_high: None,
            first_stage_f: None,
            converged: false,
            iterations: None,
            n: report.n,
            events: report.events,
            warnings: String::new(),
            error: Some(&e.message),
        })
        .map_err(csv_failure)?;
    }
    w.into_inner().map_err(|e| Failure::input("io", e.to_string()))
}

pub fn fit(args: &FitArgs) -> CmdResult {
    let methods = default_methods(args);
    check_fit_args(args, &methods)?;
    let mut map = ColumnMap::new(&args.data.time, &args.data.status).treatment(&args.treatment);
    for w in &args.instrument {
        map = map.instrument(w);
    }
    for q in &args.covariates {
        map = map.covariate(q);
    }
    let loaded = load(&args.data, map)?;
    let d = &loaded.dataset;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} rows with missing values", loaded.dropped_rows);
    }

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &m in &methods {
        for r in run_method(args, d, m) {
            match r {
                Ok(f) => results.push(f.with_ci_level(args.ci_level)),
                Err((instrument, e)) => {
                    let f = Failure::from(e);
                    failures.push(MethodFailure {
                        method: m,
                        instrument,
                        kind: f.kind,
                        message: f.message,
                        exit_code: f.exit_code,
                    })
                }
            }
        }
    }
    for f in &failures {
        let err = serde_json::json!({ "error": f });
        eprintln!("{err}");
    }
    let report = FitReport {
        n: d.n(),
        events: d.n_events(),
        dropped_rows: loaded.dropped_rows,
        results,
        failures,
    };
    let bytes = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => fit_csv(&report, args.ci_level)?,
    };
    emit(&args.output, &bytes)?;
    let code = if report.failures.iter().any(|f| f.exit_code == 1) {
        1
    } else if report.failures.is_empty() {
        0
    } else {
        2
    };
    Ok(code)
}

fn base_config(study: &StudyArgs) -> SimConfig {
    SimConfig {
        n: study.n,
        reps: study.reps,
        seed: study.seed,
        estimators: if study.method.is_empty() {
            vec![Method::Iv]
        } else {
            study.method.clone()
        },
        boot_reps: study.boot_reps,
        n_instruments: study.instruments,
        wang_h: study.wang_h.into(),
        ..SimConfig::default()
    }
}

fn summaries_csv(summaries: &[SimSummary]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_rows_csv(&sweep_rows(summaries), &mut buf)?;
    Ok(buf)
}

fn progress(study: &StudyArgs, s: &SimSummary, k: usize, total: usize) {
    if study.quiet {
        return;
    }
    let c = &s.config;
    eprint!(
        "[{k}/{total}] alpha_u={} alpha_w={} hr={} n={} reps={}:",
        c.alpha_u, c.alpha_w, c.hr_x, c.n, c.reps
    );
    for e in &s.estimators {
        eprint!(
            " {} mean={:.4} sd={:.4} cover={:.3} fail={:.3}",
            e.estimator, e.mean_beta, e.sd_beta, e.coverage_95, e.failure_fraction
        );
    }
    eprintln!(" ({:.1}s)", s.runtime_secs);
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let cfg = SimConfig {
        alpha_u: args.alpha_u,
        alpha_w: args.alpha_w,
        hr_x: args.hr,
        ..base_config(&args.study)
    };
    cfg.validate()?;
    let summary = run_study(&cfg)?;
    progress(&args.study, &summary, 1, 1);
    let bytes = match args.study.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&summary)?,
        Format::Csv => summaries_csv(std::slice::from_ref(&summary))?,
    };
    emit(&args.study.output, &bytes)?;
    Ok(0)
}

pub fn sweep(args: &SweepArgs) -> CmdResult {
    let cells = simulation::grid(&args.alpha_u, &args.alpha_w, &args.hr, &base_config(&args.study));
    if cells.is_empty() {
        return Err(Failure::input("config", "sweep grid is empty"));
    }
    for c in &cells {
        c.validate()?;
    }
    let mut summaries = Vec::with_capacity(cells.len());
    for (k, c) in cells.iter().enumerate() {
        let s = run_study(c)?;
        progress(&args.study, &s, k + 1, cells.len());
        summaries.push(s);
    }
    let bytes = match args.study.output.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&summaries)?,
        Format::Csv => summaries_csv(&summaries)?,
    };
    emit(&args.study.output, &bytes)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct KmRow<'a> {
    group: &'a str,
    time: f64,
    at_risk: usize,
    events: usize,
    survival: f64,
}

pub fn km(args: &KmArgs) -> CmdResult {
    let mut map = ColumnMap::new(&args.data.time, &args.data.status);
    if let Some(t) = &args.treatment {
        map = map.treatment(t);
    }
    let loaded = load(&args.data, map)?;
    let grouping = if !args.levels.is_empty() {
        KmGrouping::TreatmentLevels(args.levels.clone())
    } else if args.pooled || args.treatment.is_none() {
        KmGrouping::Pooled
    } else {
        KmGrouping::ByTreatment
    };
    let curves = kaplan_meier(&loaded.dataset, &grouping)?;
    let bytes = match args.output.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&curves)?,
        Format::Csv => {
            let mut buf = Vec::new();
            for g in &curves {
                writeln!(
                    buf,
                    "# group={} n={} events={} person_time={} incidence_per_100={}",
                    g.label, g.n, g.n_events, g.person_time, g.incidence_per_100
                )?;
            }
            let mut w = csv::Writer::from_writer(buf);
            for g in &curves {
                let c = &g.curve;
                for k in 0..c.times.len() {
                    w.serialize(KmRow {
                        group: &g.label,
                        time: c.times[k],
                        at_risk: c.at_risk[k],
                        events: c.events[k],
                        survival: c.survival[k],
                    })
                    .map_err(csv_failure)?;
                }
            }
            w.into_inner().map_err(|e| Failure::input("io", e.to_string()))?
        }
    };
    emit(&args.output, &bytes)?;
    Ok(0)
}
