//! Shapiro-Wilk testing, moment diagnostics and σ(κ) rescaling.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{BucketStatus, EstimateTable, SampleSet};
use crate::ingest::{Date, LabeledObservation, LabeledSeries};
use crate::special::{normal_cdf, normal_quantile};

pub const SW_MIN_N: usize = 3;
pub const SW_MAX_N: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalityError {
    #[error("sample of size {0} is too small")]
    SampleTooSmall(usize),
    #[error("sample of size {0} exceeds the Shapiro-Wilk limit of 5000")]
    SampleTooLarge(usize),
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("no set could be tested")]
    NoTestableSets,
    #[error("kappa {0} falls into an unpopulated bucket")]
    UnpopulatedBucket(f64),
    #[error("alpha must lie in (0, 1)")]
    InvalidAlpha,
}

impl NormalityError {
    pub fn name(&self) -> &'static str {
        match self {
            NormalityError::SampleTooSmall(_) => "SampleTooSmall",
            NormalityError::SampleTooLarge(_) => "SampleTooLarge",
            NormalityError::ZeroVariance => "ZeroVariance",
            NormalityError::NonFinite => "NonFinite",
            NormalityError::NoTestableSets => "NoTestableSets",
            NormalityError::UnpopulatedBucket(_) => "UnpopulatedBucket",
            NormalityError::InvalidAlpha => "InvalidAlpha",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityResult {
    pub w_statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

// Royston (1995) polynomial coefficients, constant term first.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Upper-half Shapiro-Wilk coefficients a_1 ≥ a_2 ≥ … (for the largest,
/// second largest, … order statistic), via Royston's approximation.
fn sw_coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let m: Vec<f64> = (1..=half).map(|i| -normal_quantile((i as f64 - 0.375) / (an + 0.25))).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) + m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    if n > 5 {
        let a2 = poly(&C2, rsn) + m[1] / ssumm2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a[1] = a2;
        for i in 2..half {
            a[i] = m[i] / fac;
        }
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        for i in 1..half {
            a[i] = m[i] / fac;
        }
    }
    a
}

fn sw_p_value(w: f64, n: usize) -> f64 {
    if w >= 1.0 {
        return 1.0;
    }
    if n == 3 {
        const SIX_OVER_PI: f64 = 6.0 / std::f64::consts::PI;
        return (SIX_OVER_PI * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3)).clamp(0.0, 1.0);
    }
    let an = n as f64;
    let w1 = (1.0 - w).ln();
    let (y, m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if w1 >= gamma {
            return 1e-99;
        }
        (-(gamma - w1).ln(), poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (w1, poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    // upper tail
    normal_cdf(-(y - m) / s)
}

/// Shapiro-Wilk W and its p-value (Royston's AS R94 approximation).
///
/// W is the squared correlation between the ordered sample and the
/// coefficient vector, which makes it invariant under permutation and
/// under x → a·x + b.
pub fn shapiro_wilk(sample: &[f64]) -> Result<NormalityResult, NormalityError> {
    let n = sample.len();
    if n < SW_MIN_N {
        return Err(NormalityError::SampleTooSmall(n));
    }
    if n > SW_MAX_N {
        return Err(NormalityError::SampleTooLarge(n));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(NormalityError::NonFinite);
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if !(range > 0.0) {
        return Err(NormalityError::ZeroVariance);
    }
    let half = sw_coefficients(n);
    // full antisymmetric coefficient vector aligned with ascending x
    let mut coef = vec![0.0; n];
    for (i, &a) in half.iter().enumerate() {
        coef[i] = -a;
        coef[n - 1 - i] = a;
    }
    let scaled: Vec<f64> = x.iter().map(|v| (v - x[0]) / range).collect();
    let ma = coef.iter().sum::<f64>() / n as f64;
    let mx = scaled.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (a, v) in coef.iter().zip(&scaled) {
        let da = a - ma;
        let dx = v - mx;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    // 1 - W computed directly to avoid cancellation near W = 1
    let r = (ssa * ssx).sqrt();
    let w1 = (r - sax) * (r + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(0.0, 1.0);
    Ok(NormalityResult { w_statistic: w, p_value: sw_p_value(w, n), n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetResult {
    pub set_index: usize,
    pub n: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub result: Option<NormalityResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSummary {
    pub fraction: f64,
    pub rejected: usize,
    pub tested: usize,
    pub per_set: Vec<SetResult>,
    /// Sets that could not be tested and why.
    pub excluded: Vec<(usize, NormalityError)>,
}

/// Fraction of sets whose Shapiro-Wilk p-value is below `alpha`.
/// Untestable sets (e.g. constant returns) are excluded and listed.
pub fn pvalue_rejection_fraction(sets: &[SampleSet], alpha: f64) -> Result<RejectionSummary, NormalityError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NormalityError::InvalidAlpha);
    }
    let mut per_set = Vec::with_capacity(sets.len());
    let mut excluded = Vec::new();
    let (mut rejected, mut tested) = (0, 0);
    for s in sets {
        let res = shapiro_wilk(&s.returns());
        let result = match res {
            Ok(r) => {
                tested += 1;
                if r.p_value < alpha {
                    rejected += 1;
                }
                Some(r)
            }
            Err(e) => {
                excluded.push((s.index, e));
                None
            }
        };
        per_set.push(SetResult { set_index: s.index, n: s.count, kappa_min: s.kappa_min, kappa_max: s.kappa_max, result });
    }
    if tested == 0 {
        return Err(NormalityError::NoTestableSets);
    }
    Ok(RejectionSummary { fraction: rejected as f64 / tested as f64, rejected, tested, per_set, excluded })
}

/// Fourth standardized moment minus 3, using population (1/n) moments.
pub fn excess_kurtosis(sample: &[f64]) -> Result<f64, NormalityError> {
    let n = sample.len();
    if n < 4 {
        return Err(NormalityError::SampleTooSmall(n));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (m2, m4) = sample.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = (x - mean) * (x - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / nf, m4 / nf);
    if !(m2 > 0.0) {
        return Err(NormalityError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// Divide by σ of the same day's κ bucket.
    Concurrent,
    /// Divide by σ of the previous day's κ bucket (tomorrow's κ forecast as today's).
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaledPoint {
    pub date: Date,
    pub rescaled_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledSeries {
    pub observations: Vec<RescaledPoint>,
    pub mode: RescaleMode,
    /// Days whose bucket has no positive σ̂ (a single observation or a
    /// constant bucket). They are left out rather than divided by zero.
    pub skipped: Vec<Date>,
}

impl RescaledSeries {
    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|p| p.rescaled_return).collect()
    }
}

/// `Ok(None)` when the bucket holds data but no usable σ̂.
fn bucket_sigma(table: &EstimateTable, kappa: f64) -> Result<Option<f64>, NormalityError> {
    match table.bucket_for(kappa) {
        Some(b) if b.status != BucketStatus::Empty => Ok(b.sigma.filter(|s| *s > 0.0)),
        _ => Err(NormalityError::UnpopulatedBucket(kappa)),
    }
}

/// Returns divided by the bucket σ of the day's (or previous day's) κ.
pub fn rescale_returns(
    series: &LabeledSeries,
    table: &EstimateTable,
    mode: RescaleMode,
) -> Result<RescaledSeries, NormalityError> {
    let obs = &series.observations;
    let pairs: Vec<(&LabeledObservation, f64)> = match mode {
        RescaleMode::Concurrent => obs.iter().map(|o| (o, o.kappa)).collect(),
        RescaleMode::Persistence => obs.windows(2).map(|w| (&w[1], w[0].kappa)).collect(),
    };
    let mut observations = Vec::with_capacity(pairs.len());
    let mut skipped = Vec::new();
    for (o, kappa) in pairs {
        match bucket_sigma(table, kappa)? {
            Some(sigma) => observations.push(RescaledPoint { date: o.date, rescaled_return: o.log_return / sigma }),
            None => skipped.push(o.date),
        }
    }
    Ok(RescaledSeries { observations, mode, skipped })
}
