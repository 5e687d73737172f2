//! CSV ingestion and alignment of prices, stress indices and volumes.
//!
//! All files are UTF-8 CSV with a header row and ISO-8601 dates:
//!
//! | file     | columns                                   |
//! |----------|-------------------------------------------|
//! | price    | `date,close`                              |
//! | stress   | `date,kappa`                              |
//! | volume   | `date,volume`                             |
//! | labeled  | `date,return,kappa[,kappa2][,volume]`     |
//!
//! The labeled reader also accepts the optional `kappa_change` and
//! `detrended_volume` columns that [`write_labeled_csv`] emits, so every
//! series the toolkit writes can be read back unchanged.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::median;

pub type Date = NaiveDate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("missing column `{column}` in header")]
    MissingColumn { column: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("non-positive price at line {line}")]
    NonPositivePrice { line: u64 },
    #[error("negative value at line {line}")]
    NegativeValue { line: u64 },
    #[error("date not strictly increasing at line {line}")]
    NonMonotonicDate { line: u64 },
    #[error("need at least {needed} entries, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no overlapping dates between inputs")]
    EmptyJoin,
    #[error("window {window} must be at least 2")]
    WindowTooSmall { window: usize },
    #[error("window {window} too large for series of length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("csv error: {0}")]
    Csv(String),
}

impl IngestError {
    pub fn name(&self) -> &'static str {
        match self {
            IngestError::MissingFile(_) => "MissingFile",
            IngestError::MissingColumn { .. } => "MissingColumn",
            IngestError::MalformedRow { .. } => "MalformedRow",
            IngestError::NonPositivePrice { .. } => "NonPositivePrice",
            IngestError::NegativeValue { .. } => "NegativeValue",
            IngestError::NonMonotonicDate { .. } => "NonMonotonicDate",
            IngestError::InsufficientData { .. } => "InsufficientData",
            IngestError::EmptyJoin => "EmptyJoin",
            IngestError::WindowTooSmall { .. } => "WindowTooSmall",
            IngestError::WindowTooLarge { .. } => "WindowTooLarge",
            IngestError::Csv(_) => "Csv",
        }
    }
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Csv(e.to_string())
    }
}

/// Names of the date and value columns of a two-column dated file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub date: String,
    pub value: String,
}

impl ColumnSpec {
    pub fn new(date: &str, value: &str) -> Self {
        ColumnSpec { date: date.to_string(), value: value.to_string() }
    }

    pub fn price() -> Self {
        Self::new("date", "close")
    }

    pub fn stress() -> Self {
        Self::new("date", "kappa")
    }

    pub fn volume() -> Self {
        Self::new("date", "volume")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: Date,
    pub close: f64,
}

/// Closing prices with strictly increasing dates and positive closes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceSeries {
    entries: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(entries: Vec<PricePoint>) -> Result<Self, IngestError> {
        for (i, p) in entries.iter().enumerate() {
            let line = i as u64 + 2;
            if !(p.close > 0.0) || !p.close.is_finite() {
                return Err(IngestError::NonPositivePrice { line });
            }
            if i > 0 && entries[i - 1].date >= p.date {
                return Err(IngestError::NonMonotonicDate { line });
            }
        }
        Ok(PriceSeries { entries })
    }

    pub fn entries(&self) -> &[PricePoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressPoint {
    pub date: Date,
    pub kappa: f64,
}

/// Stress index levels κ with strictly increasing dates, κ ≥ 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StressSeries {
    entries: Vec<StressPoint>,
}

impl StressSeries {
    pub fn new(entries: Vec<StressPoint>) -> Result<Self, IngestError> {
        for (i, p) in entries.iter().enumerate() {
            let line = i as u64 + 2;
            if !(p.kappa >= 0.0) || !p.kappa.is_finite() {
                return Err(IngestError::NegativeValue { line });
            }
            if i > 0 && entries[i - 1].date >= p.date {
                return Err(IngestError::NonMonotonicDate { line });
            }
        }
        Ok(StressSeries { entries })
    }

    pub fn entries(&self) -> &[StressPoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One trading day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledObservation {
    pub date: Date,
    pub log_return: f64,
    pub kappa: f64,
    /// (κ_t − κ_prev) / κ_prev against the previous observation of the series.
    pub kappa_change: Option<f64>,
    /// Second stress label, e.g. the bond index on a stock series.
    pub kappa2: Option<f64>,
    pub volume: Option<f64>,
    pub detrended_volume: Option<f64>,
}

impl LabeledObservation {
    pub fn new(date: Date, log_return: f64, kappa: f64) -> Self {
        LabeledObservation {
            date,
            log_return,
            kappa,
            kappa_change: None,
            kappa2: None,
            volume: None,
            detrended_volume: None,
        }
    }
}

/// Date-ordered observations of one asset, each carrying a κ label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub asset_id: String,
    pub observations: Vec<LabeledObservation>,
}

impl LabeledSeries {
    pub fn new(asset_id: impl Into<String>, observations: Vec<LabeledObservation>) -> Self {
        LabeledSeries { asset_id: asset_id.into(), observations }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.log_return).collect()
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.kappa).collect()
    }

    /// Fills `kappa_change` from consecutive observations. The first
    /// observation and any day following κ = 0 get `None`.
    pub fn recompute_kappa_change(&mut self) {
        let mut prev: Option<f64> = None;
        for o in &mut self.observations {
            o.kappa_change = match prev {
                Some(p) if p > 0.0 => Some((o.kappa - p) / p),
                _ => None,
            };
            prev = Some(o.kappa);
        }
    }

    /// Checks the ordering and labeling invariants.
    pub fn validate(&self) -> Result<(), IngestError> {
        for (i, o) in self.observations.iter().enumerate() {
            let line = i as u64 + 2;
            if !o.log_return.is_finite() {
                return Err(IngestError::MalformedRow { line, reason: "non-finite return".into() });
            }
            if !(o.kappa >= 0.0) || !o.kappa.is_finite() {
                return Err(IngestError::NegativeValue { line });
            }
            if i > 0 && self.observations[i - 1].date >= o.date {
                return Err(IngestError::NonMonotonicDate { line });
            }
        }
        Ok(())
    }
}

/// Dates present in one input but absent from the join.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct JoinReport {
    pub dropped_return_dates: Vec<Date>,
    pub dropped_stress_dates: Vec<Date>,
}

impl JoinReport {
    pub fn dropped(&self) -> usize {
        self.dropped_return_dates.len() + self.dropped_stress_dates.len()
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|_| IngestError::MissingFile(path.display().to_string()))
}

fn parse_date(s: &str, line: u64) -> Result<Date, IngestError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| IngestError::MalformedRow { line, reason: format!("bad date `{s}`") })
}

fn parse_number(s: &str, line: u64, column: &str) -> Result<f64, IngestError> {
    let v: f64 = s.trim().parse().map_err(|_| IngestError::MalformedRow {
        line,
        reason: format!("bad number `{s}` in column `{column}`"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::MalformedRow { line, reason: format!("non-finite `{column}`") });
    }
    Ok(v)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn require_column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    column_index(headers, name).ok_or_else(|| IngestError::MissingColumn { column: name.to_string() })
}

/// (line, date, value) triples from a two-column dated file.
fn read_dated_values<R: Read>(reader: R, spec: &ColumnSpec) -> Result<Vec<(u64, Date, f64)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let di = require_column(&headers, &spec.date)?;
    let vi = require_column(&headers, &spec.value)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = rec
            .get(di)
            .ok_or_else(|| IngestError::MalformedRow { line, reason: "missing date".into() })
            .and_then(|s| parse_date(s, line))?;
        let value = rec
            .get(vi)
            .ok_or_else(|| IngestError::MalformedRow { line, reason: "missing value".into() })
            .and_then(|s| parse_number(s, line, &spec.value))?;
        if let Some((_, prev, _)) = out.last() {
            if *prev >= date {
                return Err(IngestError::NonMonotonicDate { line });
            }
        }
        out.push((line, date, value));
    }
    Ok(out)
}

pub fn read_price_series<R: Read>(reader: R, spec: &ColumnSpec) -> Result<PriceSeries, IngestError> {
    let rows = read_dated_values(reader, spec)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (line, date, close) in rows {
        if close <= 0.0 {
            return Err(IngestError::NonPositivePrice { line });
        }
        entries.push(PricePoint { date, close });
    }
    Ok(PriceSeries { entries })
}

pub fn parse_price_series(path: &Path, spec: &ColumnSpec) -> Result<PriceSeries, IngestError> {
    read_price_series(open(path)?, spec)
}

pub fn read_stress_series<R: Read>(reader: R, spec: &ColumnSpec) -> Result<StressSeries, IngestError> {
    let rows = read_dated_values(reader, spec)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (line, date, kappa) in rows {
        if kappa < 0.0 {
            return Err(IngestError::NegativeValue { line });
        }
        entries.push(StressPoint { date, kappa });
    }
    Ok(StressSeries { entries })
}

pub fn parse_stress_series(path: &Path, spec: &ColumnSpec) -> Result<StressSeries, IngestError> {
    read_stress_series(open(path)?, spec)
}

pub fn read_volume_series<R: Read>(reader: R, spec: &ColumnSpec) -> Result<Vec<(Date, f64)>, IngestError> {
    let rows = read_dated_values(reader, spec)?;
    rows.into_iter()
        .map(|(line, d, v)| if v < 0.0 { Err(IngestError::NegativeValue { line }) } else { Ok((d, v)) })
        .collect()
}

pub fn parse_volume_series(path: &Path, spec: &ColumnSpec) -> Result<Vec<(Date, f64)>, IngestError> {
    read_volume_series(open(path)?, spec)
}

/// Reads the combined `date,return,kappa[,kappa2][,volume]` format.
///
/// When the file has no `kappa_change` column it is computed from
/// consecutive rows.
pub fn read_labeled_csv<R: Read>(reader: R, asset_id: &str) -> Result<LabeledSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let di = require_column(&headers, "date")?;
    let ri = require_column(&headers, "return")?;
    let ki = require_column(&headers, "kappa")?;
    let k2i = column_index(&headers, "kappa2");
    let vi = column_index(&headers, "volume");
    let kci = column_index(&headers, "kappa_change");
    let dvi = column_index(&headers, "detrended_volume");

    let optional = |rec: &csv::StringRecord, idx: Option<usize>, line: u64, name: &str| -> Result<Option<f64>, IngestError> {
        match idx.and_then(|i| rec.get(i)).map(str::trim) {
            None | Some("") => Ok(None),
            Some(s) => parse_number(s, line, name).map(Some),
        }
    };

    let mut observations: Vec<LabeledObservation> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| {
            rec.get(i).ok_or_else(|| IngestError::MalformedRow { line, reason: "short row".into() })
        };
        let date = parse_date(field(di)?, line)?;
        let log_return = parse_number(field(ri)?, line, "return")?;
        let kappa = parse_number(field(ki)?, line, "kappa")?;
        if kappa < 0.0 {
            return Err(IngestError::NegativeValue { line });
        }
        if let Some(prev) = observations.last() {
            if prev.date >= date {
                return Err(IngestError::NonMonotonicDate { line });
            }
        }
        let volume = optional(&rec, vi, line, "volume")?;
        if volume.is_some_and(|v| v < 0.0) {
            return Err(IngestError::NegativeValue { line });
        }
        observations.push(LabeledObservation {
            date,
            log_return,
            kappa,
            kappa_change: optional(&rec, kci, line, "kappa_change")?,
            kappa2: optional(&rec, k2i, line, "kappa2")?,
            volume,
            detrended_volume: optional(&rec, dvi, line, "detrended_volume")?,
        });
    }
    let mut series = LabeledSeries::new(asset_id, observations);
    if kci.is_none() {
        series.recompute_kappa_change();
    }
    Ok(series)
}

pub fn parse_labeled_csv(path: &Path) -> Result<LabeledSeries, IngestError> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_labeled_csv(open(path)?, &id)
}

/// Writes a labeled series. Optional columns appear only when at least one
/// observation carries them.
pub fn write_labeled_csv<W: Write>(writer: W, series: &LabeledSeries) -> Result<(), IngestError> {
    let obs = &series.observations;
    let has_k2 = obs.iter().any(|o| o.kappa2.is_some());
    let has_vol = obs.iter().any(|o| o.volume.is_some());
    let has_kc = obs.iter().any(|o| o.kappa_change.is_some());
    let has_dv = obs.iter().any(|o| o.detrended_volume.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date", "return", "kappa"];
    if has_k2 {
        header.push("kappa2");
    }
    if has_vol {
        header.push("volume");
    }
    if has_kc {
        header.push("kappa_change");
    }
    if has_dv {
        header.push("detrended_volume");
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for o in obs {
        let mut row = vec![o.date.format("%Y-%m-%d").to_string(), o.log_return.to_string(), o.kappa.to_string()];
        if has_k2 {
            row.push(opt(o.kappa2));
        }
        if has_vol {
            row.push(opt(o.volume));
        }
        if has_kc {
            row.push(opt(o.kappa_change));
        }
        if has_dv {
            row.push(opt(o.detrended_volume));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))?;
    Ok(())
}

/// Continuously compounded daily returns ln(close_t / close_{t-1}).
pub fn compute_log_returns(prices: &PriceSeries) -> Result<Vec<(Date, f64)>, IngestError> {
    if prices.len() < 2 {
        return Err(IngestError::InsufficientData { needed: 2, got: prices.len() });
    }
    Ok(prices
        .entries
        .windows(2)
        .map(|w| (w[1].date, (w[1].close / w[0].close).ln()))
        .collect())
}

/// Inner join of dated returns with stress levels.
///
/// `kappa_change` is taken against the previous observation of the joined
/// series, so holidays present in only one input do not break it.
pub fn label_with_stress(
    returns: &[(Date, f64)],
    stress: &StressSeries,
    asset_id: &str,
) -> Result<(LabeledSeries, JoinReport), IngestError> {
    let kappa_by_date: BTreeMap<Date, f64> = stress.entries.iter().map(|p| (p.date, p.kappa)).collect();
    let return_dates: HashSet<Date> = returns.iter().map(|(d, _)| *d).collect();
    let mut report = JoinReport::default();
    let mut observations = Vec::new();
    for &(date, r) in returns {
        match kappa_by_date.get(&date) {
            Some(&kappa) => observations.push(LabeledObservation::new(date, r, kappa)),
            None => report.dropped_return_dates.push(date),
        }
    }
    report.dropped_stress_dates =
        stress.entries.iter().map(|p| p.date).filter(|d| !return_dates.contains(d)).collect();
    if observations.is_empty() {
        return Err(IngestError::EmptyJoin);
    }
    let mut series = LabeledSeries::new(asset_id, observations);
    series.recompute_kappa_change();
    Ok((series, report))
}

/// Volume divided by the median of the previous `window` days.
///
/// The first `window` days have no full trailing window and are omitted,
/// as are days whose trailing median is zero.
pub fn detrend_volume(volumes: &[(Date, f64)], window: usize) -> Result<Vec<(Date, f64)>, IngestError> {
    if window < 2 {
        return Err(IngestError::WindowTooSmall { window });
    }
    if volumes.len() <= window {
        return Err(IngestError::WindowTooLarge { window, len: volumes.len() });
    }
    let values: Vec<f64> = volumes.iter().map(|(_, v)| *v).collect();
    let mut out = Vec::with_capacity(volumes.len() - window);
    for t in window..volumes.len() {
        let m = median(&values[t - window..t]);
        if m > 0.0 {
            out.push((volumes[t].0, values[t] / m));
        }
    }
    Ok(out)
}

/// Copies raw and detrended volume onto observations with matching dates.
pub fn attach_volume(series: &mut LabeledSeries, raw: &[(Date, f64)], detrended: &[(Date, f64)]) {
    let raw: BTreeMap<Date, f64> = raw.iter().copied().collect();
    let det: BTreeMap<Date, f64> = detrended.iter().copied().collect();
    for o in &mut series.observations {
        if let Some(v) = raw.get(&o.date) {
            o.volume = Some(*v);
        }
        if let Some(v) = det.get(&o.date) {
            o.detrended_volume = Some(*v);
        }
    }
}
