//! Synthetic markets with known ground truth.
//!
//! Stress follows an AR(1) process in log space (or a pluggable
//! alternative), and each day's return is an independent normal draw
//! with mean μ(κ_t) and standard deviation σ(κ_t), dt = 1 day.
//!
//! Randomness comes from ChaCha8 seeded with the config seed. The κ path
//! and the return draws use separate ChaCha streams of the same key, so a
//! path can be regenerated without consuming return draws and vice versa.
//! Normal deviates use the Ziggurat sampler of `rand_distr::StandardNormal`.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{Bucket, BucketStatus, EstimateTable};
use crate::ingest::{LabeledObservation, LabeledSeries};

const KAPPA_STREAM: u64 = 0;
const RETURN_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("correlation {rho} outside [-1, 1] at kappa_s={kappa_s}, kappa_b={kappa_b}")]
    NonPositiveDefiniteCell { rho: f64, kappa_s: f64, kappa_b: f64 },
}

impl SimError {
    pub fn name(&self) -> &'static str {
        match self {
            SimError::InvalidConfig(_) => "InvalidConfig",
            SimError::NonPositiveDefiniteCell { .. } => "NonPositiveDefiniteCell",
        }
    }
}

/// Generator seeded from a single integer; used for every randomized step.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under the key derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Stress dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KappaModel {
    /// ln κ_t = (1−φ) ln κ̄ + φ ln κ_{t−1} + ε_t, ε_t ~ N(0, s²).
    /// The first value is drawn from the stationary distribution.
    Ar1Log { mean_level: f64, persistence: f64, innovation_scale: f64 },
    /// Markov chain over fixed levels: stay with probability `stay`,
    /// otherwise jump to a uniformly chosen level.
    Regimes { levels: Vec<f64>, stay: f64 },
}

impl KappaModel {
    fn validate(&self) -> Result<(), SimError> {
        match self {
            KappaModel::Ar1Log { mean_level, persistence, innovation_scale } => {
                if !(*mean_level > 0.0) || !mean_level.is_finite() {
                    return Err(SimError::InvalidConfig("mean_level must be positive".into()));
                }
                if !(0.0..1.0).contains(persistence) {
                    return Err(SimError::InvalidConfig("persistence must lie in [0, 1)".into()));
                }
                if !(*innovation_scale > 0.0) || !innovation_scale.is_finite() {
                    return Err(SimError::InvalidConfig("innovation_scale must be positive".into()));
                }
            }
            KappaModel::Regimes { levels, stay } => {
                if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0)) {
                    return Err(SimError::InvalidConfig("regime levels must be positive".into()));
                }
                if !(0.0..=1.0).contains(stay) {
                    return Err(SimError::InvalidConfig("stay probability must lie in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    fn path(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        match self {
            KappaModel::Ar1Log { mean_level, persistence: phi, innovation_scale: s } => {
                let center = mean_level.ln();
                let stationary = s / (1.0 - phi * phi).sqrt();
                let mut x = center + stationary * std_normal(rng);
                for t in 0..n {
                    if t > 0 {
                        x = (1.0 - phi) * center + phi * x + s * std_normal(rng);
                    }
                    out.push(x.exp());
                }
            }
            KappaModel::Regimes { levels, stay } => {
                let mut k = rng.random_range(0..levels.len());
                for t in 0..n {
                    if t > 0 && rng.random::<f64>() >= *stay {
                        k = rng.random_range(0..levels.len());
                    }
                    out.push(levels[k]);
                }
            }
        }
        out
    }
}

/// A scalar function of κ: μ(κ) or σ(κ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamFn {
    Constant { value: f64 },
    /// `values[i]` on [edges[i], edges[i+1]); κ below edges[0] maps to values[0].
    Step { edges: Vec<f64>, values: Vec<f64> },
    /// intercept + slope·κ
    Linear { intercept: f64, slope: f64 },
}

impl ParamFn {
    pub fn eval(&self, kappa: f64) -> f64 {
        match self {
            ParamFn::Constant { value } => *value,
            ParamFn::Step { edges, values } => {
                let idx = edges.partition_point(|&e| e <= kappa);
                values[idx.saturating_sub(1)]
            }
            ParamFn::Linear { intercept, slope } => intercept + slope * kappa,
        }
    }

    fn validate(&self, positive: bool, what: &str) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(format!("{what}: {m}")));
        match self {
            ParamFn::Constant { value } => {
                if !value.is_finite() || (positive && !(*value > 0.0)) {
                    return bad("value must be finite (and positive for sigma)");
                }
            }
            ParamFn::Step { edges, values } => {
                if edges.is_empty() || edges.len() != values.len() {
                    return bad("step needs one value per edge");
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("step edges must be strictly ascending");
                }
                if values.iter().any(|v| !v.is_finite() || (positive && !(*v > 0.0))) {
                    return bad("step values must be finite (and positive for sigma)");
                }
            }
            ParamFn::Linear { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return bad("coefficients must be finite");
                }
                // κ > 0 is the reachable range.
                if positive && (!(*intercept > 0.0) || *slope < 0.0) {
                    return bad("linear sigma needs intercept > 0 and slope >= 0");
                }
            }
        }
        Ok(())
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid epoch")
}

/// Single-asset generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub kappa_model: KappaModel,
    pub mu_fn: ParamFn,
    pub sigma_fn: ParamFn,
    /// Optional linear dependence of the mean on the one-day κ change.
    #[serde(default)]
    pub mu_kappa_change_slope: f64,
    /// Date of the first observation; consecutive calendar days follow.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::InvalidConfig("n must be positive".into()));
        }
        if !self.mu_kappa_change_slope.is_finite() {
            return Err(SimError::InvalidConfig("mu_kappa_change_slope must be finite".into()));
        }
        self.kappa_model.validate()?;
        self.mu_fn.validate(false, "mu_fn")?;
        self.sigma_fn.validate(true, "sigma_fn")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let c: SimConfig = serde_json::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Occupancy-weighted table of the generator's own μ and σ on the
    /// given κ buckets. Exact when μ and σ are constant within each bucket.
    pub fn truth_table(&self, kappa_path: &[f64], edges: &[f64]) -> EstimateTable {
        let mut counts = vec![0usize; edges.len()];
        let mut reps = vec![f64::NAN; edges.len()];
        let mut unassigned = 0;
        for &k in kappa_path {
            let idx = edges.partition_point(|&e| e <= k);
            if idx == 0 {
                unassigned += 1;
                continue;
            }
            counts[idx - 1] += 1;
            if reps[idx - 1].is_nan() {
                reps[idx - 1] = k;
            }
        }
        let total: usize = counts.iter().sum();
        let buckets = (0..edges.len())
            .map(|i| {
                let populated = counts[i] > 0;
                Bucket {
                    low: edges[i],
                    high: edges.get(i + 1).copied(),
                    probability: if total > 0 { counts[i] as f64 / total as f64 } else { 0.0 },
                    mu: populated.then(|| self.mu_fn.eval(reps[i])),
                    sigma: populated.then(|| self.sigma_fn.eval(reps[i])),
                    count: counts[i],
                    status: if populated { BucketStatus::Populated } else { BucketStatus::Empty },
                }
            })
            .collect();
        EstimateTable { buckets, total, unassigned }
    }
}

/// Simulated observations together with the config that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub series: LabeledSeries,
    pub kappa_path: Vec<f64>,
    pub config: SimConfig,
}

pub fn simulate_stress_path(config: &SimConfig) -> Result<Vec<f64>, SimError> {
    config.validate()?;
    Ok(config.kappa_model.path(config.n, &mut stream_rng(config.seed, KAPPA_STREAM)))
}

pub fn simulate_returns(config: &SimConfig, kappa_path: &[f64]) -> Result<LabeledSeries, SimError> {
    config.validate()?;
    if kappa_path.is_empty() {
        return Err(SimError::InvalidConfig("empty kappa path".into()));
    }
    let mut rng = stream_rng(config.seed, RETURN_STREAM);
    let mut obs = Vec::with_capacity(kappa_path.len());
    let mut prev: Option<f64> = None;
    for (t, &k) in kappa_path.iter().enumerate() {
        let change = prev.filter(|p| *p > 0.0).map(|p| (k - p) / p);
        let mu = config.mu_fn.eval(k) + config.mu_kappa_change_slope * change.unwrap_or(0.0);
        let r = mu + config.sigma_fn.eval(k) * std_normal(&mut rng);
        let mut o = LabeledObservation::new(config.start_date + Days::new(t as u64), r, k);
        o.kappa_change = change;
        obs.push(o);
        prev = Some(k);
    }
    Ok(LabeledSeries::new("synthetic", obs))
}

/// Path and returns in one call.
pub fn simulate(config: &SimConfig) -> Result<SyntheticMarket, SimError> {
    let kappa_path = simulate_stress_path(config)?;
    let series = simulate_returns(config, &kappa_path)?;
    Ok(SyntheticMarket { series, kappa_path, config: config.clone() })
}

/// Stock/bond correlation as a function of (κ_s, κ_b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoFn {
    Constant { value: f64 },
    /// `above` when κ_s ≥ threshold, `below` otherwise.
    StockStressThreshold { threshold: f64, above: f64, below: f64 },
}

impl RhoFn {
    pub fn eval(&self, kappa_s: f64, _kappa_b: f64) -> f64 {
        match self {
            RhoFn::Constant { value } => *value,
            RhoFn::StockStressThreshold { threshold, above, below } => {
                if kappa_s >= *threshold {
                    *above
                } else {
                    *below
                }
            }
        }
    }
}

/// Two-asset generator: each asset's μ and σ depend on its own stress,
/// the correlation on both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSimConfig {
    pub n: usize,
    pub seed: u64,
    pub kappa_s: KappaModel,
    pub kappa_b: KappaModel,
    /// Correlation of the two log-κ innovations (AR(1) models only).
    #[serde(default)]
    pub kappa_innovation_correlation: f64,
    pub mu_s: ParamFn,
    pub sigma_s: ParamFn,
    pub mu_b: ParamFn,
    pub sigma_b: ParamFn,
    pub rho_fn: RhoFn,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

impl JointSimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::InvalidConfig("n must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.kappa_innovation_correlation) {
            return Err(SimError::InvalidConfig("kappa_innovation_correlation outside [-1, 1]".into()));
        }
        self.kappa_s.validate()?;
        self.kappa_b.validate()?;
        self.mu_s.validate(false, "mu_s")?;
        self.mu_b.validate(false, "mu_b")?;
        self.sigma_s.validate(true, "sigma_s")?;
        self.sigma_b.validate(true, "sigma_b")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let c: JointSimConfig = serde_json::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    fn joint_kappa_paths(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream_rng(self.seed, KAPPA_STREAM);
        match (&self.kappa_s, &self.kappa_b) {
            (
                KappaModel::Ar1Log { mean_level: ms, persistence: ps, innovation_scale: ss },
                KappaModel::Ar1Log { mean_level: mb, persistence: pb, innovation_scale: sb },
            ) => {
                let c = self.kappa_innovation_correlation;
                let c_perp = (1.0 - c * c).max(0.0).sqrt();
                let (cs, cb) = (ms.ln(), mb.ln());
                let mut xs = 0.0;
                let mut xb = 0.0;
                let mut out_s = Vec::with_capacity(self.n);
                let mut out_b = Vec::with_capacity(self.n);
                for t in 0..self.n {
                    let z1 = std_normal(&mut rng);
                    let z2 = c * z1 + c_perp * std_normal(&mut rng);
                    if t == 0 {
                        xs = cs + ss / (1.0 - ps * ps).sqrt() * z1;
                        xb = cb + sb / (1.0 - pb * pb).sqrt() * z2;
                    } else {
                        xs = (1.0 - ps) * cs + ps * xs + ss * z1;
                        xb = (1.0 - pb) * cb + pb * xb + sb * z2;
                    }
                    out_s.push(xs.exp());
                    out_b.push(xb.exp());
                }
                (out_s, out_b)
            }
            _ => {
                let s = self.kappa_s.path(self.n, &mut rng);
                let b = self.kappa_b.path(self.n, &mut stream_rng(self.seed, KAPPA_STREAM + 2));
                (s, b)
            }
        }
    }
}

/// Stock and bond series on shared dates. Each carries its own stress as
/// `kappa` and the other asset's as `kappa2`.
pub fn simulate_joint(config: &JointSimConfig) -> Result<(LabeledSeries, LabeledSeries), SimError> {
    config.validate()?;
    let (ks, kb) = config.joint_kappa_paths();
    let mut rng = stream_rng(config.seed, RETURN_STREAM);
    let mut stock = Vec::with_capacity(config.n);
    let mut bond = Vec::with_capacity(config.n);
    for t in 0..config.n {
        let rho = config.rho_fn.eval(ks[t], kb[t]);
        if !(-1.0..=1.0).contains(&rho) {
            return Err(SimError::NonPositiveDefiniteCell { rho, kappa_s: ks[t], kappa_b: kb[t] });
        }
        let z1 = std_normal(&mut rng);
        let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
        let date = config.start_date + Days::new(t as u64);
        let rs = config.mu_s.eval(ks[t]) + config.sigma_s.eval(ks[t]) * z1;
        let rb = config.mu_b.eval(kb[t]) + config.sigma_b.eval(kb[t]) * z2;
        let mut os = LabeledObservation::new(date, rs, ks[t]);
        os.kappa2 = Some(kb[t]);
        let mut ob = LabeledObservation::new(date, rb, kb[t]);
        ob.kappa2 = Some(ks[t]);
        stock.push(os);
        bond.push(ob);
    }
    let mut stock = LabeledSeries::new("stock", stock);
    let mut bond = LabeledSeries::new("bond", bond);
    stock.recompute_kappa_change();
    bond.recompute_kappa_change();
    Ok((stock, bond))
}
