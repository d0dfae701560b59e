//! Right-censored survival data with treatment, instrument, and covariate columns.
//!
//! A [`SurvivalDataset`] is immutable once built. Each row carries an observed
//! time `min(T, C)`, an event flag, a treatment value, zero or more instrument
//! values, and zero or more measured covariates. [`RiskSetIndex`] orders the
//! rows by descending time so that risk-set sums can be accumulated in a
//! single backward sweep.

use std::collections::HashMap;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnNames {
    pub time: String,
    pub status: String,
    pub treatment: String,
    pub instruments: Vec<String>,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    time: Vec<f64>,
    status: Vec<bool>,
    treatment: Vec<f64>,
    instruments: Vec<Vec<f64>>,
    covariates: Vec<Vec<f64>>,
    names: ColumnNames,
}

impl SurvivalDataset {
    /// Builds a dataset from its three mandatory columns.
    ///
    /// Times must be finite and non-negative, and at least one row must be an event.
    pub fn new(time: Vec<f64>, status: Vec<bool>, treatment: Vec<f64>) -> Result<Self> {
        let n = time.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if status.len() != n || treatment.len() != n {
            return Err(Error::InvalidData(format!(
                "column lengths differ: time {n}, status {}, treatment {}",
                status.len(),
                treatment.len()
            )));
        }
        if let Some(i) = time.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Validation {
                row: i + 1,
                message: format!("time must be finite and >= 0, got {}", time[i]),
            });
        }
        if let Some(i) = treatment.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation {
                row: i + 1,
                message: "treatment must be finite".into(),
            });
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::InvalidData("dataset has no events".into()));
        }
        Ok(Self {
            time,
            status,
            treatment,
            instruments: Vec::new(),
            covariates: Vec::new(),
            names: ColumnNames {
                time: "time".into(),
                status: "status".into(),
                treatment: "treatment".into(),
                instruments: Vec::new(),
                covariates: Vec::new(),
            },
        })
    }

    pub fn with_column_names(mut self, time: &str, status: &str, treatment: &str) -> Self {
        self.names.time = time.to_string();
        self.names.status = status.to_string();
        self.names.treatment = treatment.to_string();
        self
    }

    pub fn with_instrument(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        self.check_column(&name, &values)?;
        self.instruments.push(values);
        self.names.instruments.push(name);
        Ok(self)
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        self.check_column(&name, &values)?;
        self.covariates.push(values);
        self.names.covariates.push(name);
        Ok(self)
    }

    fn check_column(&self, name: &str, values: &[f64]) -> Result<()> {
        if values.len() != self.n() {
            return Err(Error::InvalidData(format!(
                "column '{name}' has {} values, expected {}",
                values.len(),
                self.n()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                row: i + 1,
                message: format!("column '{name}' must be finite"),
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn instrument(&self, j: usize) -> Result<&[f64]> {
        self.instruments
            .get(j)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("instrument column {j} does not exist")))
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn covariate(&self, j: usize) -> Result<&[f64]> {
        self.covariates
            .get(j)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("covariate column {j} does not exist")))
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    pub fn instrument_name(&self, j: usize) -> &str {
        self.names.instruments.get(j).map_or("?", String::as_str)
    }

    pub fn instrument_index(&self, name: &str) -> Option<usize> {
        self.names.instruments.iter().position(|s| s == name)
    }

    /// Total follow-up time, the denominator of incidence rates.
    pub fn person_time(&self) -> f64 {
        stats::sum(&self.time)
    }

    /// New dataset made of the given rows (repeats allowed), in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let pick = |col: &[f64]| rows.iter().map(|&i| col[i]).collect::<Vec<_>>();
        let mut out = Self::new(
            pick(&self.time),
            rows.iter().map(|&i| self.status[i]).collect(),
            pick(&self.treatment),
        )?;
        out.instruments = self.instruments.iter().map(|c| pick(c)).collect();
        out.covariates = self.covariates.iter().map(|c| pick(c)).collect();
        out.names = self.names.clone();
        Ok(out)
    }

    /// Appends `I(instrument_j > threshold)` as a new instrument column and returns its index.
    pub fn with_dichotomized_instrument(&self, j: usize, threshold: f64) -> Result<(Self, usize)> {
        let binary = self
            .instrument(j)?
            .iter()
            .map(|&w| if w > threshold { 1.0 } else { 0.0 })
            .collect();
        let name = format!("{}_binary", self.instrument_name(j));
        let out = self.clone().with_instrument(name, binary)?;
        let idx = out.n_instruments() - 1;
        Ok((out, idx))
    }

    /// Builds the index that orders rows for risk-set sweeps.
    pub fn risk_index(&self) -> RiskSetIndex {
        RiskSetIndex::build(self)
    }
}

/// How rows with missing values in bound columns are handled on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NaPolicy {
    #[default]
    Reject,
    Drop,
}

/// Binds dataset roles to CSV header names.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub time: String,
    pub status: String,
    /// When absent the treatment loads as a constant zero column.
    pub treatment: Option<String>,
    pub instruments: Vec<String>,
    pub covariates: Vec<String>,
    pub delimiter: u8,
}

impl ColumnMap {
    pub fn new(time: &str, status: &str) -> Self {
        Self {
            time: time.to_string(),
            status: status.to_string(),
            treatment: None,
            instruments: Vec::new(),
            covariates: Vec::new(),
            delimiter: b',',
        }
    }

    pub fn treatment(mut self, name: &str) -> Self {
        self.treatment = Some(name.to_string());
        self
    }

    pub fn instrument(mut self, name: &str) -> Self {
        self.instruments.push(name.to_string());
        self
    }

    pub fn covariate(mut self, name: &str) -> Self {
        self.covariates.push(name.to_string());
        self
    }

    pub fn delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub dataset: SurvivalDataset,
    pub dropped_rows: usize,
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "na" | "NaN" | "nan" | "." | "null")
}

pub fn load_csv(path: impl AsRef<Path>, map: &ColumnMap, na: NaPolicy) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, map, na)
}

pub fn read_csv<R: Read>(reader: R, map: &ColumnMap, na: NaPolicy) -> Result<LoadOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(map.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Io(e.to_string()))?
        .clone();
    let lookup: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("column '{name}' not found in header")))
    };

    let time_col = find(&map.time)?;
    let status_col = find(&map.status)?;
    let treat_col = map.treatment.as_deref().map(find).transpose()?;
    let inst_cols = map.instruments.iter().map(|s| find(s)).collect::<Result<Vec<_>>>()?;
    let cov_cols = map.covariates.iter().map(|s| find(s)).collect::<Result<Vec<_>>>()?;

    let mut time = Vec::new();
    let mut status = Vec::new();
    let mut treatment = Vec::new();
    let mut instruments = vec![Vec::new(); inst_cols.len()];
    let mut covariates = vec![Vec::new(); cov_cols.len()];
    let mut dropped = 0usize;

    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        let bound = std::iter::once(time_col)
            .chain(std::iter::once(status_col))
            .chain(treat_col)
            .chain(inst_cols.iter().copied())
            .chain(cov_cols.iter().copied());
        let mut missing = None;
        for c in bound {
            if is_missing(record.get(c).unwrap_or("")) {
                missing = Some(c);
                break;
            }
        }
        if let Some(c) = missing {
            match na {
                NaPolicy::Drop => {
                    dropped += 1;
                    continue;
                }
                NaPolicy::Reject => {
                    return Err(Error::Validation {
                        row,
                        message: format!("missing value in column '{}'", &headers[c]),
                    })
                }
            }
        }
        let num = |c: usize| -> Result<f64> {
            let field = record.get(c).unwrap_or("");
            field.parse::<f64>().map_err(|_| Error::Validation {
                row,
                message: format!("column '{}': cannot parse '{field}' as a number", &headers[c]),
            })
        };
        let t = num(time_col)?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Validation {
                row,
                message: format!("time must be finite and >= 0, got {t}"),
            });
        }
        let s = num(status_col)?;
        let event = if s == 1.0 {
            true
        } else if s == 0.0 {
            false
        } else {
            return Err(Error::Validation {
                row,
                message: format!("status must be 0 or 1, got {s}"),
            });
        };
        time.push(t);
        status.push(event);
        treatment.push(match treat_col {
            Some(c) => num(c)?,
            None => 0.0,
        });
        for (dst, &c) in instruments.iter_mut().zip(&inst_cols) {
            dst.push(num(c)?);
        }
        for (dst, &c) in covariates.iter_mut().zip(&cov_cols) {
            dst.push(num(c)?);
        }
    }

    let mut dataset = SurvivalDataset::new(time, status, treatment)?.with_column_names(
        &map.time,
        &map.status,
        map.treatment.as_deref().unwrap_or(""),
    );
    for (name, col) in map.instruments.iter().zip(instruments) {
        dataset = dataset.with_instrument(name.clone(), col)?;
    }
    for (name, col) in map.covariates.iter().zip(covariates) {
        dataset = dataset.with_covariate(name.clone(), col)?;
    }
    Ok(LoadOutcome {
        dataset,
        dropped_rows: dropped,
    })
}

/// Rows ordered by descending time, with runs of tied times grouped.
///
/// Within a tie, events precede censorings, then original row order. A row is
/// at risk at time `s` when its time is `>= s`, so every member of a tie group
/// belongs to the risk set of the events in that group.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSetIndex {
    order: Vec<usize>,
    sorted_time: Vec<f64>,
    sorted_event: Vec<bool>,
    event_positions: Vec<usize>,
    tie_groups: Vec<Range<usize>>,
}

impl RiskSetIndex {
    pub fn build(d: &SurvivalDataset) -> Self {
        let time = d.time();
        let status = d.status();
        let mut order: Vec<usize> = (0..d.n()).collect();
        order.sort_by(|&a, &b| {
            time[b]
                .total_cmp(&time[a])
                .then(status[b].cmp(&status[a]))
                .then(a.cmp(&b))
        });
        let sorted_time: Vec<f64> = order.iter().map(|&i| time[i]).collect();
        let sorted_event: Vec<bool> = order.iter().map(|&i| status[i]).collect();
        let event_positions = order.iter().copied().filter(|&i| status[i]).collect();

        let mut tie_groups = Vec::new();
        let mut start = 0;
        for k in 1..=sorted_time.len() {
            if k == sorted_time.len() || sorted_time[k] != sorted_time[start] {
                tie_groups.push(start..k);
                start = k;
            }
        }
        Self {
            order,
            sorted_time,
            sorted_event,
            event_positions,
            tie_groups,
        }
    }

    /// Row indices sorted by descending time.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sorted_time(&self) -> &[f64] {
        &self.sorted_time
    }

    pub fn sorted_event(&self) -> &[bool] {
        &self.sorted_event
    }

    /// Rows with an observed event, in sweep order.
    pub fn event_positions(&self) -> &[usize] {
        &self.event_positions
    }

    /// Ranges of positions in [`order`](Self::order) sharing one time value.
    pub fn tie_groups(&self) -> &[Range<usize>] {
        &self.tie_groups
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub fn build_risk_index(d: &SurvivalDataset) -> RiskSetIndex {
    RiskSetIndex::build(d)
}
