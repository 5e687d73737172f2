//! Browser demo. Three operations are exported to JavaScript:
//!
//! * `tail_curve`: log10 tail probability of the S&P 500 bucket mixture
//!   next to a single normal with the same mean and variance.
//! * `frontier`: two-asset frontier for one stress cell.
//! * `simulate_mixture`: pooled returns from a two-level stress path, with
//!   the sample and analytic excess kurtosis and a histogram.
//!
//! Each export is a thin wrapper over a plain Rust function so the numbers
//! can be tested natively.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::Serialize;
use wasm_bindgen::prelude::*;

use stresswalk::estimators::{EstimateTable, TableRow};
use stresswalk::normality::excess_kurtosis;
use stresswalk::portfolio::{efficient_frontier, CellParams};
use stresswalk::riskmodel::{conditional_table, mixture_cdf, mixture_moments, normal_fit_cdf, KappaFilter};
use stresswalk::simulate::{simulate, KappaModel, ParamFn, SimConfig};

const SPX_ROWS: [(f64, Option<f64>, f64, f64, f64); 8] = [
    (0.0, Some(10.0), 0.008, 0.00288, 0.00310),
    (10.0, Some(20.0), 0.523, 0.00097, 0.00679),
    (20.0, Some(30.0), 0.349, 0.00052, 0.01163),
    (30.0, Some(40.0), 0.085, 0.00010, 0.01761),
    (40.0, Some(50.0), 0.025, -0.00495, 0.02634),
    (50.0, Some(60.0), 0.002, -0.03426, 0.04302),
    (60.0, Some(70.0), 0.004, 0.00598, 0.05707),
    (70.0, None, 0.003, -0.03952, 0.04146),
];

pub fn spx_table() -> EstimateTable {
    let rows: Vec<TableRow> = SPX_ROWS
        .iter()
        .map(|&(low, high, probability, mu, sigma)| TableRow { low, high, probability, mu, sigma })
        .collect();
    EstimateTable::from_rows(&rows).expect("static table is valid")
}

/// Rows of `[x, log10 mixture P(r < x), log10 normal-fit P(r < x)]`,
/// flattened. Only buckets at or above `kappa_min` enter the mixture.
pub fn tail_curve_values(x_min: f64, x_max: f64, points: usize, kappa_min: f64) -> Result<Vec<f64>, String> {
    if points < 2 || !(x_max > x_min) {
        return Err("need at least two points and x_max > x_min".into());
    }
    let table = conditional_table(&spx_table(), &KappaFilter::at_least(kappa_min)).map_err(|e| e.to_string())?;
    let moments = mixture_moments(&table).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(points * 3);
    for i in 0..points {
        let x = x_min + (x_max - x_min) * i as f64 / (points - 1) as f64;
        let mix = mixture_cdf(&table, x).map_err(|e| e.to_string())?;
        let fit = normal_fit_cdf(&moments, x).map_err(|e| e.to_string())?;
        out.extend_from_slice(&[x, mix.log10(), fit.log10()]);
    }
    Ok(out)
}

#[derive(Serialize)]
pub struct FrontierView {
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
    pub sd: Vec<f64>,
    pub efficient: Vec<bool>,
    pub min_variance_weight: f64,
}

pub fn frontier_view(cell: CellParams, step: f64) -> Result<FrontierView, String> {
    let f = efficient_frontier(&cell, step).map_err(|e| e.to_string())?;
    Ok(FrontierView {
        w: f.points.iter().map(|p| p.w).collect(),
        mu: f.points.iter().map(|p| p.mu_p).collect(),
        sd: f.points.iter().map(|p| p.var_p.sqrt()).collect(),
        efficient: f.points.iter().map(|p| p.efficient).collect(),
        min_variance_weight: f.min_variance_weight,
    })
}

#[derive(Serialize)]
pub struct MixtureView {
    pub sample_kurtosis: f64,
    pub analytic_kurtosis: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Half the days at σ = `sigma_low`, half at `sigma_high`, zero mean.
pub fn mixture_view(sigma_low: f64, sigma_high: f64, n: usize, seed: u64, bins: usize) -> Result<MixtureView, String> {
    if bins == 0 {
        return Err("need at least one bin".into());
    }
    let cfg = SimConfig {
        n,
        seed,
        kappa_model: KappaModel::Regimes { levels: vec![10.0, 30.0], stay: 0.0 },
        mu_fn: ParamFn::Constant { value: 0.0 },
        sigma_fn: ParamFn::Step { edges: vec![0.0, 20.0], values: vec![sigma_low, sigma_high] },
        mu_kappa_change_slope: 0.0,
        start_date: chrono_epoch(),
    };
    let returns = simulate(&cfg).map_err(|e| e.to_string())?.series.returns();
    let sample_kurtosis = excess_kurtosis(&returns).map_err(|e| e.to_string())?;
    let (e2, e4) = (
        (sigma_low.powi(2) + sigma_high.powi(2)) / 2.0,
        (sigma_low.powi(4) + sigma_high.powi(4)) / 2.0,
    );
    let analytic_kurtosis = 3.0 * e4 / (e2 * e2) - 3.0;
    let half = 4.0 * sigma_high;
    let width = 2.0 * half / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| -half + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for r in returns {
        let k = ((r + half) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        }
    }
    Ok(MixtureView { sample_kurtosis, analytic_kurtosis, bin_edges, counts })
}

fn chrono_epoch() -> chrono::NaiveDate {
    chrono::NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

fn to_js<T: Serialize>(v: Result<T, String>) -> Result<String, JsValue> {
    v.and_then(|x| serde_json::to_string(&x).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tail_curve(x_min: f64, x_max: f64, points: usize, kappa_min: f64) -> Result<Vec<f64>, JsValue> {
    tail_curve_values(x_min, x_max, points, kappa_min).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn frontier(mu_s: f64, mu_b: f64, sigma_s: f64, sigma_b: f64, rho: f64, step: f64) -> Result<String, JsValue> {
    to_js(frontier_view(CellParams { mu_s, mu_b, sigma_s, sigma_b, rho }, step))
}

#[wasm_bindgen]
pub fn simulate_mixture(sigma_low: f64, sigma_high: f64, n: usize, seed: u64, bins: usize) -> Result<String, JsValue> {
    to_js(mixture_view(sigma_low, sigma_high, n, seed, bins))
}
