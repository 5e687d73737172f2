//! Normal-mixture CDF over stress buckets and the risk measures built on it.
//!
//! With bucket weights P_i, means μ_i and standard deviations σ_i, the
//! probability of a one-day return below x0 is
//!
//! ```text
//! CDF(x0) = Σ_i P_i · Φ((x0 − μ_i) / σ_i)
//! ```
//!
//! Buckets with σ = 0 (or with a single observation, whose σ is
//! undefined) act as point masses at μ_i.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{Bucket, EstimateTable};
use crate::special;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("table has no populated buckets")]
    EmptyTable,
    #[error("interval lower bound {a} is not below upper bound {b}")]
    InvalidInterval { a: f64, b: f64 },
    #[error("kappa filter selects no populated bucket")]
    EmptySelection,
    #[error("variance is zero")]
    ZeroVariance,
    #[error("horizon {0} is negative")]
    NegativeHorizon(i64),
    #[error("horizon {0} must be at least 1")]
    InvalidHorizon(i64),
    #[error("threshold must be finite")]
    NonFiniteThreshold,
}

impl RiskError {
    pub fn name(&self) -> &'static str {
        match self {
            RiskError::EmptyTable => "EmptyTable",
            RiskError::InvalidInterval { .. } => "InvalidInterval",
            RiskError::EmptySelection => "EmptySelection",
            RiskError::ZeroVariance => "ZeroVariance",
            RiskError::NegativeHorizon(_) => "NegativeHorizon",
            RiskError::InvalidHorizon(_) => "InvalidHorizon",
            RiskError::NonFiniteThreshold => "NonFiniteThreshold",
        }
    }
}

/// Φ(z), relative accuracy better than 1e-9 wherever the result is a
/// normal float (z ≳ −37.5). Below that use [`ln_normal_cdf`].
pub fn normal_cdf(z: f64) -> f64 {
    special::normal_cdf(z)
}

/// ln Φ(z), accurate through the whole finite range.
pub fn ln_normal_cdf(z: f64) -> f64 {
    special::ln_normal_cdf(z)
}

/// Converts a simple percent move (e.g. −9) to a log return ln(1 + p/100).
pub fn percent_to_log_return(pct: f64) -> f64 {
    (pct / 100.0).ln_1p()
}

/// One normal component of a mixture; `sigma == 0` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl MixtureComponent {
    pub fn cdf(&self, x0: f64) -> f64 {
        if self.sigma > 0.0 {
            normal_cdf((x0 - self.mu) / self.sigma)
        } else if x0 >= self.mu {
            1.0
        } else {
            0.0
        }
    }
}

fn component(b: &Bucket) -> Option<MixtureComponent> {
    b.is_active().then(|| MixtureComponent { weight: b.probability, mu: b.mu.unwrap_or(0.0), sigma: b.sigma.unwrap_or(0.0) })
}

pub fn components(table: &EstimateTable) -> Vec<MixtureComponent> {
    table.buckets.iter().filter_map(component).collect()
}

/// Σ w_i F_i(x0) / Σ w_i, clamped to [0, 1]. `None` when there is no mass.
pub fn mixture_cdf_components(comps: &[MixtureComponent], x0: f64) -> Option<f64> {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return None;
    }
    let acc: f64 = comps.iter().map(|c| c.weight * c.cdf(x0)).sum();
    Some((acc / total).clamp(0.0, 1.0))
}

fn check_threshold(x0: f64) -> Result<(), RiskError> {
    if x0.is_nan() {
        return Err(RiskError::NonFiniteThreshold);
    }
    Ok(())
}

/// Probability of a one-day return below `x0` under the bucket mixture.
pub fn mixture_cdf(table: &EstimateTable, x0: f64) -> Result<f64, RiskError> {
    check_threshold(x0)?;
    mixture_cdf_components(&components(table), x0).ok_or(RiskError::EmptyTable)
}

/// P(a < r ≤ b).
pub fn interval_probability(table: &EstimateTable, a: f64, b: f64) -> Result<f64, RiskError> {
    check_threshold(a)?;
    check_threshold(b)?;
    if !(a < b) {
        return Err(RiskError::InvalidInterval { a, b });
    }
    let comps = components(table);
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return Err(RiskError::EmptyTable);
    }
    // Per-component differences keep precision when both ends sit in a tail.
    let acc: f64 = comps.iter().map(|c| c.weight * component_interval(c, a, b)).sum();
    Ok((acc / total).clamp(0.0, 1.0))
}

fn component_interval(c: &MixtureComponent, a: f64, b: f64) -> f64 {
    if !(c.sigma > 0.0) {
        return if a < c.mu && c.mu <= b { 1.0 } else { 0.0 };
    }
    let za = (a - c.mu) / c.sigma;
    let zb = (b - c.mu) / c.sigma;
    if za > 0.0 {
        // both in the upper tail: use Φ(−z) to avoid 1 − Φ
        normal_cdf(-za) - normal_cdf(-zb)
    } else {
        normal_cdf(zb) - normal_cdf(za)
    }
    .max(0.0)
}

/// Inclusive-lower, exclusive-upper κ range used to select buckets. A
/// bucket is selected when its whole range lies inside the filter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KappaFilter {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl KappaFilter {
    pub fn at_least(min: f64) -> Self {
        KappaFilter { min: Some(min), max: None }
    }

    pub fn all() -> Self {
        KappaFilter::default()
    }

    pub fn selects(&self, b: &Bucket) -> bool {
        let lo_ok = self.min.is_none_or(|m| b.low >= m);
        let hi_ok = match (self.max, b.high) {
            (None, _) => true,
            (Some(m), Some(h)) => h <= m,
            (Some(_), None) => false,
        };
        lo_ok && hi_ok
    }
}

/// Mixture CDF with weights renormalized over the selected buckets.
pub fn conditional_cdf(table: &EstimateTable, filter: &KappaFilter, x0: f64) -> Result<f64, RiskError> {
    check_threshold(x0)?;
    let comps: Vec<MixtureComponent> =
        table.buckets.iter().filter(|b| filter.selects(b)).filter_map(component).collect();
    mixture_cdf_components(&comps, x0).ok_or(RiskError::EmptySelection)
}

/// The table restricted to the selected buckets, renormalized.
pub fn conditional_table(table: &EstimateTable, filter: &KappaFilter) -> Result<EstimateTable, RiskError> {
    let mut t = table.clone();
    t.buckets.retain(|b| filter.selects(b));
    let mass: f64 = t.active_buckets().map(|b| b.probability).sum();
    if !(mass > 0.0) {
        return Err(RiskError::EmptySelection);
    }
    for b in &mut t.buckets {
        b.probability /= mass;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureMoments {
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
}

impl MixtureMoments {
    pub fn stddev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Moments of a normal mixture by the law of total moments.
pub fn mixture_moments_components(comps: &[MixtureComponent]) -> Result<MixtureMoments, RiskError> {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return Err(RiskError::EmptyTable);
    }
    let mean = comps.iter().map(|c| c.weight * c.mu).sum::<f64>() / total;
    // central moments about the mixture mean
    let (m2, m4) = comps.iter().fold((0.0, 0.0), |(m2, m4), c| {
        let d = c.mu - mean;
        let s2 = c.sigma * c.sigma;
        (m2 + c.weight * (d * d + s2), m4 + c.weight * (d.powi(4) + 6.0 * d * d * s2 + 3.0 * s2 * s2))
    });
    let (variance, m4) = (m2 / total, m4 / total);
    let excess_kurtosis = if variance > 0.0 { m4 / (variance * variance) - 3.0 } else { f64::NAN };
    Ok(MixtureMoments { mean, variance, excess_kurtosis })
}

pub fn mixture_moments(table: &EstimateTable) -> Result<MixtureMoments, RiskError> {
    mixture_moments_components(&components(table))
}

/// Mean, n−1 variance and excess kurtosis of a raw return sample.
pub fn sample_moments(returns: &[f64]) -> Result<MixtureMoments, RiskError> {
    let n = returns.len();
    if n < 2 {
        return Err(RiskError::ZeroVariance);
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let variance = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(variance > 0.0) {
        return Err(RiskError::ZeroVariance);
    }
    let excess_kurtosis = crate::normality::excess_kurtosis(returns).unwrap_or(f64::NAN);
    Ok(MixtureMoments { mean, variance, excess_kurtosis })
}

/// Probability below `x0` under a single normal with the given moments.
pub fn normal_fit_cdf(moments: &MixtureMoments, x0: f64) -> Result<f64, RiskError> {
    check_threshold(x0)?;
    if !(moments.variance > 0.0) {
        return Err(RiskError::ZeroVariance);
    }
    Ok(normal_cdf((x0 - moments.mean) / moments.stddev()))
}

/// r_N = N · (mixture mean).
pub fn expected_n_day_return(table: &EstimateTable, horizon: i64) -> Result<f64, RiskError> {
    if horizon < 0 {
        return Err(RiskError::NegativeHorizon(horizon));
    }
    Ok(horizon as f64 * mixture_moments(table)?.mean)
}

/// P_N = CDF(−r_N): chance that one day wipes out N days of expected return.
pub fn loss_probability_pn(table: &EstimateTable, horizon: i64) -> Result<f64, RiskError> {
    if horizon < 1 {
        return Err(RiskError::InvalidHorizon(horizon));
    }
    let r_n = expected_n_day_return(table, horizon)?;
    mixture_cdf(table, -r_n)
}

/// (mean − risk_free) / stddev, all per day.
pub fn sharpe_ratio(moments: &MixtureMoments, risk_free: f64) -> Result<f64, RiskError> {
    if !(moments.variance > 0.0) {
        return Err(RiskError::ZeroVariance);
    }
    Ok((moments.mean - risk_free) / moments.stddev())
}

/// Inputs for [`risk_report`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskQuery {
    pub threshold: f64,
    pub conditioning: Option<KappaFilter>,
    pub horizon: Option<i64>,
    pub risk_free: f64,
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub threshold: f64,
    pub conditioning: Option<KappaFilter>,
    pub mixture_probability: f64,
    pub normal_fit_probability: Option<f64>,
    pub moments: MixtureMoments,
    pub risk_free: f64,
    pub sharpe: Option<f64>,
    pub horizon: Option<i64>,
    pub r_n: Option<f64>,
    pub p_n: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub interval_probability: Option<f64>,
    pub interval_normal_fit: Option<f64>,
}

/// Evaluates every requested measure. With conditioning, all figures
/// (including the normal fit and r_N) refer to the conditional mixture.
pub fn risk_report(table: &EstimateTable, query: &RiskQuery) -> Result<RiskReport, RiskError> {
    let t = match &query.conditioning {
        Some(f) => conditional_table(table, f)?,
        None => table.clone(),
    };
    let moments = mixture_moments(&t)?;
    let mixture_probability = mixture_cdf(&t, query.threshold)?;
    let normal_fit_probability = normal_fit_cdf(&moments, query.threshold).ok();
    let sharpe = sharpe_ratio(&moments, query.risk_free).ok();
    let (r_n, p_n) = match query.horizon {
        Some(h) => (Some(expected_n_day_return(&t, h)?), Some(loss_probability_pn(&t, h)?)),
        None => (None, None),
    };
    let (interval_probability, interval_normal_fit) = match query.interval {
        Some((a, b)) => {
            let p = interval_probability(&t, a, b)?;
            let fit = (moments.variance > 0.0).then(|| {
                let single = [MixtureComponent { weight: 1.0, mu: moments.mean, sigma: moments.stddev() }];
                component_interval(&single[0], a, b)
            });
            (Some(p), fit)
        }
        None => (None, None),
    };
    Ok(RiskReport {
        threshold: query.threshold,
        conditioning: query.conditioning,
        mixture_probability,
        normal_fit_probability,
        moments,
        risk_free: query.risk_free,
        sharpe,
        horizon: query.horizon,
        r_n,
        p_n,
        interval: query.interval,
        interval_probability,
        interval_normal_fit,
    })
}

impl RiskReport {
    /// Plain-text summary table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k:<28} {v}\n"));
        line("threshold (log return)", format!("{:.6}", self.threshold));
        if let Some(c) = &self.conditioning {
            line("conditioning kappa", format!("[{}, {})", fmt_opt(c.min), fmt_opt(c.max)));
        }
        line("mixture P(r < x0)", format!("{:.6e}", self.mixture_probability));
        if let Some(p) = self.normal_fit_probability {
            line("normal fit P(r < x0)", format!("{p:.6e}"));
        }
        line("mean / day", format!("{:.6e}", self.moments.mean));
        line("stddev / day", format!("{:.6e}", self.moments.stddev()));
        line("excess kurtosis", format!("{:.4}", self.moments.excess_kurtosis));
        line("risk free / day", format!("{:.6e}", self.risk_free));
        if let Some(s) = self.sharpe {
            line("sharpe / day", format!("{s:.6}"));
        }
        if let (Some(h), Some(r), Some(p)) = (self.horizon, self.r_n, self.p_n) {
            line(&format!("r_{h}"), format!("{r:.6e}"));
            line(&format!("P_{h}"), format!("{p:.6e}"));
        }
        if let (Some((a, b)), Some(p)) = (self.interval, self.interval_probability) {
            line(&format!("P({a} < r <= {b})"), format!("{p:.6e}"));
            if let Some(f) = self.interval_normal_fit {
                line("  normal fit", format!("{f:.6e}"));
            }
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| x.to_string())
}
