//! Ordering, partitioning and bucketing of labeled observations into
//! per-stress estimates of P(κ), μ(κ), σ(κ) and, for two assets, ρ.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Date, LabeledObservation, LabeledSeries};
use crate::simulate::seeded_rng;
use crate::stats::{mean, median, pearson, sample_std};

/// Tolerance on the probability mass of a table after normalization.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("series is empty")]
    EmptySeries,
    #[error("set size {0} is below the minimum of 3")]
    SetSizeTooSmall(usize),
    #[error("no observations fall into any bucket")]
    NoObservations,
    #[error("bucket [{low}, {high:?}) has fewer than 2 observations")]
    DegenerateBucket { low: f64, high: Option<f64> },
    #[error("bucket edges must be finite and strictly ascending")]
    InvalidEdges,
    #[error("need at least 2 observations to split, got {0}")]
    TooFewObservations(usize),
    #[error("the two series share no dates")]
    EmptyJoin,
    #[error("decile count must be at least 1")]
    InvalidDeciles,
    #[error("observation on {0} has no detrended volume")]
    MissingVolume(Date),
    #[error("only {available} observations carry a kappa change, need {needed}")]
    MissingKappaChange { available: usize, needed: usize },
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

impl EstimateError {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateError::EmptySeries => "EmptySeries",
            EstimateError::SetSizeTooSmall(_) => "SetSizeTooSmall",
            EstimateError::NoObservations => "NoObservations",
            EstimateError::DegenerateBucket { .. } => "DegenerateBucket",
            EstimateError::InvalidEdges => "InvalidEdges",
            EstimateError::TooFewObservations(_) => "TooFewObservations",
            EstimateError::EmptyJoin => "EmptyJoin",
            EstimateError::InvalidDeciles => "InvalidDeciles",
            EstimateError::MissingVolume(_) => "MissingVolume",
            EstimateError::MissingKappaChange { .. } => "MissingKappaChange",
            EstimateError::InvalidTable(_) => "InvalidTable",
        }
    }
}

impl From<csv::Error> for EstimateError {
    fn from(e: csv::Error) -> Self {
        EstimateError::InvalidTable(e.to_string())
    }
}

/// How to order a series before partitioning it into fixed-size sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    Chronological,
    Randomized { seed: u64 },
    StressAscending,
    StressChangeAscending,
}

/// Returns a permutation of the observations. Ties are broken by date;
/// in `StressChangeAscending` days without a κ change go last.
pub fn order_series(series: &LabeledSeries, mode: OrderMode) -> Result<Vec<LabeledObservation>, EstimateError> {
    if series.is_empty() {
        return Err(EstimateError::EmptySeries);
    }
    let mut obs = series.observations.clone();
    match mode {
        OrderMode::Chronological => obs.sort_by_key(|o| o.date),
        OrderMode::Randomized { seed } => {
            obs.sort_by_key(|o| o.date);
            obs.shuffle(&mut seeded_rng(seed));
        }
        OrderMode::StressAscending => {
            obs.sort_by(|a, b| a.kappa.total_cmp(&b.kappa).then(a.date.cmp(&b.date)));
        }
        OrderMode::StressChangeAscending => obs.sort_by(|a, b| {
            let key = match (a.kappa_change, b.kappa_change) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            };
            key.then(a.date.cmp(&b.date))
        }),
    }
    Ok(obs)
}

/// A block of consecutive observations from an ordered series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub index: usize,
    #[serde(skip)]
    pub observations: Vec<LabeledObservation>,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub count: usize,
}

impl SampleSet {
    pub fn returns(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.log_return).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub sets: Vec<SampleSet>,
    /// Trailing observations that did not fill a whole set.
    pub dropped: usize,
}

/// Splits an ordered list into non-overlapping sets of `set_size`.
pub fn partition_fixed(ordered: &[LabeledObservation], set_size: usize) -> Result<Partition, EstimateError> {
    if set_size < 3 {
        return Err(EstimateError::SetSizeTooSmall(set_size));
    }
    let sets = ordered
        .chunks_exact(set_size)
        .enumerate()
        .map(|(index, chunk)| {
            let returns: Vec<f64> = chunk.iter().map(|o| o.log_return).collect();
            let (kmin, kmax) = chunk
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.kappa), hi.max(o.kappa)));
            SampleSet {
                index,
                observations: chunk.to_vec(),
                kappa_min: kmin,
                kappa_max: kmax,
                mu_hat: mean(&returns),
                sigma_hat: sample_std(&returns).unwrap_or(0.0),
                count: chunk.len(),
            }
        })
        .collect();
    Ok(Partition { sets, dropped: ordered.len() % set_size })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketStatus {
    Populated,
    /// Carries probability mass but fewer than two observations, so σ is undefined.
    Degenerate,
    Empty,
}

/// One stress bucket [low, high); `high = None` is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub low: f64,
    pub high: Option<f64>,
    pub probability: f64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub count: usize,
    pub status: BucketStatus,
}

impl Bucket {
    pub fn contains(&self, kappa: f64) -> bool {
        kappa >= self.low && self.high.is_none_or(|h| kappa < h)
    }

    /// Takes part in the mixture: positive mass and a defined mean.
    pub fn is_active(&self) -> bool {
        self.probability > 0.0 && self.mu.is_some()
    }
}

/// Per-bucket frequencies and moments, the discretized P(κ), μ(κ), σ(κ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub buckets: Vec<Bucket>,
    /// Observations the table was estimated from (0 for hand-entered tables).
    pub total: usize,
    /// Observations with κ below the first edge.
    pub unassigned: usize,
}

/// A row of a hand-entered table: bucket range plus P, μ, σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub low: f64,
    pub high: Option<f64>,
    pub probability: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl EstimateTable {
    /// Builds a table from published rows. Probabilities are rescaled to
    /// sum to one, since rounded published percentages rarely do.
    pub fn from_rows(rows: &[TableRow]) -> Result<Self, EstimateError> {
        let buckets = rows
            .iter()
            .map(|r| Bucket {
                low: r.low,
                high: r.high,
                probability: r.probability,
                mu: Some(r.mu),
                sigma: Some(r.sigma),
                count: 0,
                status: if r.probability > 0.0 { BucketStatus::Populated } else { BucketStatus::Empty },
            })
            .collect();
        let mut table = EstimateTable { buckets, total: 0, unassigned: 0 };
        table.normalize()?;
        Ok(table)
    }

    fn normalize(&mut self) -> Result<(), EstimateError> {
        for b in &self.buckets {
            if !(b.probability >= 0.0) || !b.probability.is_finite() {
                return Err(EstimateError::InvalidTable("negative or non-finite probability".into()));
            }
            if b.sigma.is_some_and(|s| !(s >= 0.0) || !s.is_finite()) {
                return Err(EstimateError::InvalidTable("negative or non-finite sigma".into()));
            }
            if b.mu.is_some_and(|m| !m.is_finite()) {
                return Err(EstimateError::InvalidTable("non-finite mu".into()));
            }
        }
        let sum: f64 = self.buckets.iter().filter(|b| b.is_active()).map(|b| b.probability).sum();
        if !(sum > 0.0) {
            return Err(EstimateError::InvalidTable("no probability mass".into()));
        }
        for b in &mut self.buckets {
            b.probability = if b.is_active() { b.probability / sum } else { 0.0 };
        }
        Ok(())
    }

    /// Checks edge ordering, ranges and total mass.
    pub fn validate(&self) -> Result<(), EstimateError> {
        if self.buckets.is_empty() {
            return Err(EstimateError::InvalidTable("no buckets".into()));
        }
        for w in self.buckets.windows(2) {
            if !(w[0].low < w[1].low) || w[0].high.is_none() {
                return Err(EstimateError::InvalidEdges);
            }
        }
        for b in &self.buckets {
            if b.probability < 0.0 || b.sigma.is_some_and(|s| s < 0.0) {
                return Err(EstimateError::InvalidTable("negative probability or sigma".into()));
            }
            if b.high.is_some_and(|h| !(h > b.low)) {
                return Err(EstimateError::InvalidEdges);
            }
        }
        let sum = self.probability_sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(EstimateError::InvalidTable(format!("probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn probability_sum(&self) -> f64 {
        self.buckets.iter().filter(|b| b.is_active()).map(|b| b.probability).sum()
    }

    pub fn active_buckets(&self) -> impl Iterator<Item = &Bucket> {
        self.buckets.iter().filter(|b| b.is_active())
    }

    pub fn bucket_for(&self, kappa: f64) -> Option<&Bucket> {
        self.buckets.iter().find(|b| b.contains(kappa))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EstimateError> {
        let mut t: EstimateTable = serde_json::from_str(s).map_err(|e| EstimateError::InvalidTable(e.to_string()))?;
        if (t.probability_sum() - 1.0).abs() > PROBABILITY_SUM_TOL {
            t.normalize()?;
        }
        t.validate()?;
        Ok(t)
    }

    /// `bucket_low,bucket_high,p,mu,sigma,count`; open upper edge is `inf`,
    /// undefined moments are empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EstimateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bucket_low", "bucket_high", "p", "mu", "sigma", "count"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.buckets {
            w.write_record([
                b.low.to_string(),
                b.high.map_or_else(|| "inf".to_string(), |h| h.to_string()),
                b.probability.to_string(),
                opt(b.mu),
                opt(b.sigma),
                b.count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| EstimateError::InvalidTable(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EstimateError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut buckets = Vec::new();
        let mut total = 0;
        let num = |s: &str| -> Result<Option<f64>, EstimateError> {
            let s = s.trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| EstimateError::InvalidTable(format!("bad number `{s}`")))
        };
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 6 {
                return Err(EstimateError::InvalidTable("expected 6 columns".into()));
            }
            let low = num(&rec[0])?.ok_or_else(|| EstimateError::InvalidTable("missing bucket_low".into()))?;
            let high = num(&rec[1])?.filter(|h| h.is_finite());
            let probability = num(&rec[2])?.unwrap_or(0.0);
            let mu = num(&rec[3])?;
            let sigma = num(&rec[4])?;
            let count: usize = rec[5].trim().parse().map_err(|_| EstimateError::InvalidTable("bad count".into()))?;
            total += count;
            let status = match (probability > 0.0 && mu.is_some(), sigma.is_some()) {
                (false, _) => BucketStatus::Empty,
                (true, true) => BucketStatus::Populated,
                (true, false) => BucketStatus::Degenerate,
            };
            buckets.push(Bucket { low, high, probability, mu, sigma, count, status });
        }
        let mut t = EstimateTable { buckets, total, unassigned: 0 };
        if (t.probability_sum() - 1.0).abs() > PROBABILITY_SUM_TOL {
            t.normalize()?;
        }
        t.validate()?;
        Ok(t)
    }
}

fn check_edges(edges: &[f64]) -> Result<(), EstimateError> {
    if edges.is_empty() || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(EstimateError::InvalidEdges);
    }
    Ok(())
}

/// Fixed-width edges `start, start+width, …` with `count` buckets (the last open-ended).
pub fn fixed_width_edges(start: f64, width: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + width * i as f64).collect()
}

/// Lower edges of `k` empirical-quantile buckets; duplicate edges from
/// ties are merged, so fewer than `k` may come back.
pub fn quantile_edges(values: &[f64], k: usize) -> Vec<f64> {
    if values.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut edges: Vec<f64> = (0..k).map(|i| v[i * n / k]).collect();
    edges.dedup();
    edges
}

/// Frequency table of returns by κ bucket.
pub fn bucket_table(series: &LabeledSeries, edges: &[f64]) -> Result<EstimateTable, EstimateError> {
    check_edges(edges)?;
    if series.is_empty() {
        return Err(EstimateError::NoObservations);
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); edges.len()];
    let mut unassigned = 0;
    for o in &series.observations {
        // index of the last edge <= kappa
        let idx = edges.partition_point(|&e| e <= o.kappa);
        if idx == 0 {
            unassigned += 1;
        } else {
            groups[idx - 1].push(o.log_return);
        }
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(EstimateError::NoObservations);
    }
    let buckets = groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let count = g.len();
            let status = match count {
                0 => BucketStatus::Empty,
                1 => BucketStatus::Degenerate,
                _ => BucketStatus::Populated,
            };
            Bucket {
                low: edges[i],
                high: edges.get(i + 1).copied(),
                probability: count as f64 / total as f64,
                mu: (count > 0).then(|| mean(g)),
                sigma: sample_std(g),
                count,
                status,
            }
        })
        .collect();
    Ok(EstimateTable { buckets, total, unassigned })
}

/// Random half split; the train half gets the extra observation when n is odd.
/// Both halves keep date order and the original `kappa_change` labels.
pub fn split_sample(series: &LabeledSeries, seed: u64) -> Result<(LabeledSeries, LabeledSeries), EstimateError> {
    let n = series.len();
    if n < 2 {
        return Err(EstimateError::TooFewObservations(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let n_train = n.div_ceil(2);
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |ix: &[usize], suffix: &str| {
        LabeledSeries::new(
            format!("{}-{suffix}", series.asset_id),
            ix.iter().map(|&i| series.observations[i]).collect(),
        )
    };
    Ok((pick(&train_idx, "train"), pick(&test_idx, "test")))
}

/// One cell of the two-asset stress grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Stock-stress decile (row).
    pub i: usize,
    /// Bond-stress decile (column).
    pub j: usize,
    pub count: usize,
    pub joint_probability: f64,
    pub mu_s: Option<f64>,
    pub mu_b: Option<f64>,
    pub sigma_s: Option<f64>,
    pub sigma_b: Option<f64>,
    pub rho: Option<f64>,
    pub occupied: bool,
}

impl GridCell {
    /// Fewer than two observations: σ and ρ are undefined.
    pub fn is_degenerate(&self) -> bool {
        self.occupied && self.count < 2
    }
}

/// Two-asset estimates on a decile × decile stress grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub deciles: usize,
    /// Lowest κ_s in each row.
    pub edges_s: Vec<f64>,
    /// Lowest κ_b in each column.
    pub edges_b: Vec<f64>,
    /// Row-major, `cells[i * deciles + j]`.
    pub cells: Vec<GridCell>,
    pub total: usize,
}

impl Grid2D {
    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.deciles + j]
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.occupied)
    }

    pub fn unoccupied_count(&self) -> usize {
        self.cells.iter().filter(|c| !c.occupied).count()
    }

    /// Occupied cells as buckets of a one-dimensional table for one asset.
    /// Bucket ranges are linear cell indices `[k, k+1)`.
    fn marginal_table(&self, stock: bool) -> EstimateTable {
        let buckets = self
            .occupied_cells()
            .map(|c| {
                let k = (c.i * self.deciles + c.j) as f64;
                let (mu, sigma) = if stock { (c.mu_s, c.sigma_s) } else { (c.mu_b, c.sigma_b) };
                Bucket {
                    low: k,
                    high: Some(k + 1.0),
                    probability: c.joint_probability,
                    mu,
                    sigma,
                    count: c.count,
                    status: if c.count >= 2 { BucketStatus::Populated } else { BucketStatus::Degenerate },
                }
            })
            .collect();
        EstimateTable { buckets, total: self.total, unassigned: 0 }
    }

    pub fn stock_table(&self) -> EstimateTable {
        self.marginal_table(true)
    }

    pub fn bond_table(&self) -> EstimateTable {
        self.marginal_table(false)
    }

    /// `i,j,kappa_s_low,kappa_b_low,count,p,mu_s,mu_b,sigma_s,sigma_b,rho`, one row per cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EstimateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "kappa_s_low", "kappa_b_low", "count", "p", "mu_s", "mu_b", "sigma_s", "sigma_b", "rho"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            w.write_record([
                c.i.to_string(),
                c.j.to_string(),
                self.edges_s[c.i].to_string(),
                self.edges_b[c.j].to_string(),
                c.count.to_string(),
                c.joint_probability.to_string(),
                opt(c.mu_s),
                opt(c.mu_b),
                opt(c.sigma_s),
                opt(c.sigma_b),
                opt(c.rho),
            ])?;
        }
        w.flush().map_err(|e| EstimateError::InvalidTable(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EstimateError> {
        let g: Grid2D = serde_json::from_str(s).map_err(|e| EstimateError::InvalidTable(e.to_string()))?;
        if g.deciles == 0 || g.cells.len() != g.deciles * g.deciles {
            return Err(EstimateError::InvalidTable("cell count does not match deciles".into()));
        }
        Ok(g)
    }
}

/// Rank-based bin index of every value; bins differ in size by at most one.
fn rank_bins(keys: &[(f64, Date)], k: usize) -> (Vec<usize>, Vec<f64>) {
    let n = keys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].0.total_cmp(&keys[b].0).then(keys[a].1.cmp(&keys[b].1)));
    let mut bin = vec![0; n];
    let mut edges = vec![f64::NAN; k];
    for (rank, &idx) in order.iter().enumerate() {
        let b = rank * k / n;
        if edges[b].is_nan() {
            edges[b] = keys[idx].0;
        }
        bin[idx] = b;
    }
    (bin, edges)
}

/// Joint decile grid of two series on their common dates.
///
/// Deciles are assigned by rank of each κ (ties broken by date), so the
/// marginal counts along each axis differ by at most one.
pub fn grid_estimates(series_a: &LabeledSeries, series_b: &LabeledSeries, deciles: usize) -> Result<Grid2D, EstimateError> {
    if deciles == 0 {
        return Err(EstimateError::InvalidDeciles);
    }
    let b_by_date: BTreeMap<Date, &LabeledObservation> = series_b.observations.iter().map(|o| (o.date, o)).collect();
    let joined: Vec<(&LabeledObservation, &LabeledObservation)> = series_a
        .observations
        .iter()
        .filter_map(|a| b_by_date.get(&a.date).map(|b| (a, *b)))
        .collect();
    if joined.is_empty() {
        return Err(EstimateError::EmptyJoin);
    }
    let n = joined.len();
    let k = deciles.min(n);
    let keys_s: Vec<(f64, Date)> = joined.iter().map(|(a, _)| (a.kappa, a.date)).collect();
    let keys_b: Vec<(f64, Date)> = joined.iter().map(|(_, b)| (b.kappa, b.date)).collect();
    let (row, edges_s) = rank_bins(&keys_s, k);
    let (col, edges_b) = rank_bins(&keys_b, k);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k * k];
    for t in 0..n {
        members[row[t] * k + col[t]].push(t);
    }
    let cells = members
        .iter()
        .enumerate()
        .map(|(cell_idx, m)| {
            let rs: Vec<f64> = m.iter().map(|&t| joined[t].0.log_return).collect();
            let rb: Vec<f64> = m.iter().map(|&t| joined[t].1.log_return).collect();
            let occupied = !m.is_empty();
            GridCell {
                i: cell_idx / k,
                j: cell_idx % k,
                count: m.len(),
                joint_probability: m.len() as f64 / n as f64,
                mu_s: occupied.then(|| mean(&rs)),
                mu_b: occupied.then(|| mean(&rb)),
                sigma_s: sample_std(&rs),
                sigma_b: sample_std(&rb),
                rho: pearson(&rs, &rb),
                occupied,
            }
        })
        .collect();
    Ok(Grid2D { deciles: k, edges_s, edges_b, cells, total: n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumePoint {
    pub set_index: usize,
    pub kappa_median: f64,
    pub median_volume: f64,
}

/// Median detrended volume of consecutive stress-ordered sets.
pub fn median_volume_by_stress(series: &LabeledSeries, set_size: usize) -> Result<Vec<VolumePoint>, EstimateError> {
    if let Some(o) = series.observations.iter().find(|o| o.detrended_volume.is_none()) {
        return Err(EstimateError::MissingVolume(o.date));
    }
    let ordered = order_series(series, OrderMode::StressAscending)?;
    let part = partition_fixed(&ordered, set_size)?;
    Ok(part
        .sets
        .iter()
        .map(|s| {
            let vols: Vec<f64> = s.observations.iter().filter_map(|o| o.detrended_volume).collect();
            let ks: Vec<f64> = s.observations.iter().map(|o| o.kappa).collect();
            VolumePoint { set_index: s.index, kappa_median: median(&ks), median_volume: median(&vols) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChangePoint {
    pub median_kappa_change: f64,
    pub mu_hat: f64,
}

/// Mean return of consecutive sets ordered by one-day κ change.
/// Observations without a κ change (the first day) are left out.
pub fn mu_by_stress_change(series: &LabeledSeries, set_size: usize) -> Result<Vec<ChangePoint>, EstimateError> {
    let with_change: Vec<LabeledObservation> =
        series.observations.iter().filter(|o| o.kappa_change.is_some()).copied().collect();
    if with_change.len() < set_size {
        return Err(EstimateError::MissingKappaChange { available: with_change.len(), needed: set_size });
    }
    let sub = LabeledSeries::new(series.asset_id.clone(), with_change);
    let ordered = order_series(&sub, OrderMode::StressChangeAscending)?;
    let part = partition_fixed(&ordered, set_size)?;
    Ok(part
        .sets
        .iter()
        .map(|s| {
            let changes: Vec<f64> = s.observations.iter().filter_map(|o| o.kappa_change).collect();
            ChangePoint { median_kappa_change: median(&changes), mu_hat: s.mu_hat }
        })
        .collect())
}
