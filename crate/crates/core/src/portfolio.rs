//! Two-asset (stock/bond) analysis per stress cell: portfolio moments,
//! efficient frontiers, the two-dimensional mixture CDF and CAPM
//! regressions by stress bucket. Weights are long-only; `w` is the bond
//! share of the portfolio.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::Grid2D;
use crate::ingest::{Date, LabeledSeries};
use crate::riskmodel::{mixture_cdf_components, MixtureComponent};
use crate::stats::mean;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortfolioError {
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("invalid cell parameters: {0}")]
    InvalidCell(String),
    #[error("grid step {0} outside (0, 0.5]")]
    InvalidStep(f64),
    #[error("assets are indistinguishable (identical sigma at rho = 1)")]
    DegenerateAssets,
    #[error("grid has no occupied cell")]
    EmptyGrid,
    #[error("bucket [{low}, {high:?}) has {n} joint observations, need 3")]
    InsufficientBucketData { low: f64, high: Option<f64>, n: usize },
    #[error("benchmark returns in bucket [{low}, {high:?}) have zero variance")]
    ZeroBenchmarkVariance { low: f64, high: Option<f64> },
    #[error("bucket edges must be finite and strictly ascending")]
    InvalidEdges,
    #[error("csv error: {0}")]
    Csv(String),
}

impl PortfolioError {
    pub fn name(&self) -> &'static str {
        match self {
            PortfolioError::WeightOutOfRange(_) => "WeightOutOfRange",
            PortfolioError::InvalidCell(_) => "InvalidCell",
            PortfolioError::InvalidStep(_) => "InvalidStep",
            PortfolioError::DegenerateAssets => "DegenerateAssets",
            PortfolioError::EmptyGrid => "EmptyGrid",
            PortfolioError::InsufficientBucketData { .. } => "InsufficientBucketData",
            PortfolioError::ZeroBenchmarkVariance { .. } => "ZeroBenchmarkVariance",
            PortfolioError::InvalidEdges => "InvalidEdges",
            PortfolioError::Csv(_) => "Csv",
        }
    }
}

impl From<csv::Error> for PortfolioError {
    fn from(e: csv::Error) -> Self {
        PortfolioError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub mu_s: f64,
    pub mu_b: f64,
    pub sigma_s: f64,
    pub sigma_b: f64,
    pub rho: f64,
}

impl CellParams {
    pub fn validate(&self) -> Result<(), PortfolioError> {
        let finite = [self.mu_s, self.mu_b, self.sigma_s, self.sigma_b, self.rho].iter().all(|v| v.is_finite());
        if !finite {
            return Err(PortfolioError::InvalidCell("non-finite parameter".into()));
        }
        if self.sigma_s < 0.0 || self.sigma_b < 0.0 {
            return Err(PortfolioError::InvalidCell("negative sigma".into()));
        }
        if self.rho.abs() > 1.0 {
            return Err(PortfolioError::InvalidCell(format!("rho {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }
}

fn check_weight(w: f64) -> Result<(), PortfolioError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(PortfolioError::WeightOutOfRange(w));
    }
    Ok(())
}

/// (μ_p, σ_p²) of the portfolio holding `w` in bonds and `1 − w` in stocks.
pub fn portfolio_moments(cell: &CellParams, w: f64) -> Result<(f64, f64), PortfolioError> {
    check_weight(w)?;
    cell.validate()?;
    Ok(moments_unchecked(cell, w))
}

fn moments_unchecked(c: &CellParams, w: f64) -> (f64, f64) {
    let v = 1.0 - w;
    let mu = w * c.mu_b + v * c.mu_s;
    let var = w * w * c.sigma_b * c.sigma_b + v * v * c.sigma_s * c.sigma_s + 2.0 * w * v * c.rho * c.sigma_s * c.sigma_b;
    (mu, var.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub w: f64,
    pub mu_p: f64,
    pub var_p: f64,
    pub efficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
    /// Unconstrained minimum-variance bond weight.
    pub min_variance_weight: f64,
    /// The same weight clipped to the long-only range.
    pub min_variance_weight_long_only: f64,
}

impl Frontier {
    /// `w,mu_p,var_p,efficient`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PortfolioError> {
        let mut wr = csv::Writer::from_writer(writer);
        wr.write_record(["w", "mu_p", "var_p", "efficient"])?;
        for p in &self.points {
            wr.write_record([p.w.to_string(), p.mu_p.to_string(), p.var_p.to_string(), p.efficient.to_string()])?;
        }
        wr.flush().map_err(|e| PortfolioError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Frontier sampled at w = 0, step, 2·step, …, 1.
///
/// Points whose mean is at least that of the (long-only) minimum-variance
/// portfolio are flagged efficient.
pub fn efficient_frontier(cell: &CellParams, w_step: f64) -> Result<Frontier, PortfolioError> {
    if !(w_step > 0.0 && w_step <= 0.5) {
        return Err(PortfolioError::InvalidStep(w_step));
    }
    cell.validate()?;
    let (ss, sb) = (cell.sigma_s * cell.sigma_s, cell.sigma_b * cell.sigma_b);
    let cov = cell.rho * cell.sigma_s * cell.sigma_b;
    let denom = ss + sb - 2.0 * cov;
    if !(denom > 0.0) {
        return Err(PortfolioError::DegenerateAssets);
    }
    let w_star = (ss - cov) / denom;
    let w_clip = w_star.clamp(0.0, 1.0);
    let (mu_star, _) = moments_unchecked(cell, w_clip);
    let steps = (1.0 / w_step).round() as usize;
    let mut ws: Vec<f64> = (0..=steps).map(|k| (k as f64 * w_step).min(1.0)).collect();
    if *ws.last().unwrap() < 1.0 {
        ws.push(1.0);
    }
    ws.dedup();
    let scale = cell.mu_s.abs().max(cell.mu_b.abs()).max(f64::MIN_POSITIVE);
    let points = ws
        .into_iter()
        .map(|w| {
            let (mu_p, var_p) = moments_unchecked(cell, w);
            FrontierPoint { w, mu_p, var_p, efficient: mu_p >= mu_star - 1e-12 * scale }
        })
        .collect();
    Ok(Frontier { points, min_variance_weight: w_star, min_variance_weight_long_only: w_clip })
}

/// Per-cell portfolio distributions as mixture components. Cells with a
/// single observation contribute a point mass at their mean.
pub fn portfolio_components(grid: &Grid2D, w: f64) -> Result<Vec<MixtureComponent>, PortfolioError> {
    check_weight(w)?;
    let comps: Vec<MixtureComponent> = grid
        .occupied_cells()
        .map(|c| {
            let mu_s = c.mu_s.unwrap_or(0.0);
            let mu_b = c.mu_b.unwrap_or(0.0);
            let params = CellParams {
                mu_s,
                mu_b,
                sigma_s: c.sigma_s.unwrap_or(0.0),
                sigma_b: c.sigma_b.unwrap_or(0.0),
                // ρ is undefined when one side is constant; the cross term then vanishes anyway
                rho: c.rho.unwrap_or(0.0),
            };
            let (mu, var) = moments_unchecked(&params, w);
            MixtureComponent { weight: c.joint_probability, mu, sigma: var.sqrt() }
        })
        .collect();
    if comps.is_empty() {
        return Err(PortfolioError::EmptyGrid);
    }
    Ok(comps)
}

/// Two-dimensional mixture CDF of the portfolio return.
pub fn portfolio_mixture_cdf(grid: &Grid2D, w: f64, x0: f64) -> Result<f64, PortfolioError> {
    let comps = portfolio_components(grid, w)?;
    mixture_cdf_components(&comps, x0).ok_or(PortfolioError::EmptyGrid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionResult {
    pub bucket_low: f64,
    pub bucket_high: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x` with intercept.
fn ols(x: &[f64], y: &[f64], low: f64, high: Option<f64>) -> Result<RegressionResult, PortfolioError> {
    let n = x.len();
    if n < 3 {
        return Err(PortfolioError::InsufficientBucketData { low, high, n });
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(PortfolioError::ZeroBenchmarkVariance { low, high });
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - alpha - beta * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RegressionResult { bucket_low: low, bucket_high: high, alpha, beta, r_squared, n })
}

/// Benchmark and asset returns of one bucket.
type Pairs = (Vec<f64>, Vec<f64>);

fn bucketed_pairs(
    asset: &LabeledSeries,
    benchmark: &LabeledSeries,
    edges: &[f64],
) -> Result<Vec<Pairs>, PortfolioError> {
    if edges.is_empty() || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PortfolioError::InvalidEdges);
    }
    let asset_by_date: BTreeMap<Date, f64> = asset.observations.iter().map(|o| (o.date, o.log_return)).collect();
    let mut groups = vec![(Vec::new(), Vec::new()); edges.len()];
    for b in &benchmark.observations {
        let Some(&ra) = asset_by_date.get(&b.date) else { continue };
        let idx = edges.partition_point(|&e| e <= b.kappa);
        if idx > 0 {
            groups[idx - 1].0.push(b.log_return);
            groups[idx - 1].1.push(ra);
        }
    }
    Ok(groups)
}

/// Per-bucket regression of asset returns on benchmark returns, bucketed
/// by the benchmark's κ on common dates. Fails on the first bucket with
/// fewer than three joint observations.
pub fn capm_regression(
    asset: &LabeledSeries,
    benchmark: &LabeledSeries,
    edges: &[f64],
) -> Result<Vec<RegressionResult>, PortfolioError> {
    let groups = bucketed_pairs(asset, benchmark, edges)?;
    groups
        .iter()
        .enumerate()
        .map(|(i, (x, y))| ols(x, y, edges[i], edges.get(i + 1).copied()))
        .collect()
}

/// Like [`capm_regression`] but returns each bucket's outcome separately.
pub fn capm_regression_by_bucket(
    asset: &LabeledSeries,
    benchmark: &LabeledSeries,
    edges: &[f64],
) -> Result<Vec<Result<RegressionResult, PortfolioError>>, PortfolioError> {
    let groups = bucketed_pairs(asset, benchmark, edges)?;
    Ok(groups.iter().enumerate().map(|(i, (x, y))| ols(x, y, edges[i], edges.get(i + 1).copied())).collect())
}

/// `bucket_low,bucket_high,alpha,beta,r2,n`
pub fn write_regressions_csv<W: Write>(writer: W, results: &[RegressionResult]) -> Result<(), PortfolioError> {
    let mut wr = csv::Writer::from_writer(writer);
    wr.write_record(["bucket_low", "bucket_high", "alpha", "beta", "r2", "n"])?;
    for r in results {
        wr.write_record([
            r.bucket_low.to_string(),
            r.bucket_high.map_or_else(|| "inf".to_string(), |h| h.to_string()),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.r_squared.to_string(),
            r.n.to_string(),
        ])?;
    }
    wr.flush().map_err(|e| PortfolioError::Csv(e.to_string()))?;
    Ok(())
}
