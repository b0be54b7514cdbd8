//! Estimators of the exceedance proportion θ under SRS, DUST-SRS and
//! DUST-MNS, with bias and variance approximations, bias correction,
//! delta-method and bootstrap intervals, and imperfect-ranking calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::frame::{empirical_quantile, ArealFrame};
use crate::mathkit::{
    binom_pmf_vec, g_k, g_k_derivs, order_stat_exceed, order_stat_exceed_curvature,
    order_stat_exceed_slope, q_k, solve_root, RootSolveSpec,
};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 2000;
const MIN_BOOTSTRAP_REPLICATES: usize = 100;
const MONOTONE_GRID: usize = 1000;
const DOUBLY_STOCHASTIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Srs,
    DustSrs,
    DustMns,
    DustMnsImperfect,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Srs => "srs",
            Method::DustSrs => "dust_srs",
            Method::DustMns => "dust_mns",
            Method::DustMnsImperfect => "dust_mns_imperfect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum CiStyle {
    /// `θ̂ ± z sqrt(Var)`.
    Delta,
    /// `θ̂_BC ± z sqrt(Var)`.
    DeltaBiasCorrected,
    /// Percentile interval from resampled set indicators.
    Bootstrap { replicates: usize, seed: u64 },
}

impl CiStyle {
    pub fn label(&self) -> &'static str {
        match self {
            CiStyle::Delta => "delta",
            CiStyle::DeltaBiasCorrected => "delta_bias_corrected",
            CiStyle::Bootstrap { .. } => "bootstrap",
        }
    }
}

/// Misranking model for imperfect nomination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisrankingModel {
    /// Interpolation `τ² q_k + (1 - τ²) θ` between perfect ranking and random nomination.
    Tau(f64),
    /// Doubly stochastic `k x k` matrix `ν`; `ν[r][s]` is the probability that
    /// the unit judged to have rank `s` truly has rank `r` (1-based in prose,
    /// 0-based here).
    Matrix(Vec<Vec<f64>>),
}

impl MisrankingModel {
    pub fn validate(&self, k: u32) -> Result<()> {
        match self {
            MisrankingModel::Tau(tau) => {
                if !(0.0..=1.0).contains(tau) {
                    return Err(Error::Model(format!("tau = {tau} is outside [0, 1]")));
                }
            }
            MisrankingModel::Matrix(nu) => {
                let k = k as usize;
                if nu.len() != k || nu.iter().any(|row| row.len() != k) {
                    return Err(Error::Model(format!("misranking matrix must be {k} x {k}")));
                }
                if nu.iter().flatten().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return Err(Error::Model(
                        "misranking matrix has a negative entry".into(),
                    ));
                }
                for (i, row) in nu.iter().enumerate() {
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > DOUBLY_STOCHASTIC_TOL {
                        return Err(Error::Model(format!("row {i} sums to {s}, not 1")));
                    }
                }
                for j in 0..k {
                    let s: f64 = nu.iter().map(|row| row[j]).sum();
                    if (s - 1.0).abs() > DOUBLY_STOCHASTIC_TOL {
                        return Err(Error::Model(format!("column {j} sums to {s}, not 1")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            MisrankingModel::Tau(t) => Some(*t),
            MisrankingModel::Matrix(_) => None,
        }
    }
}

/// Result of one estimation.
///
/// Serializes to the flat record `theta_hat, theta_bc, bias_hat, var_hat,
/// ci_low, ci_high, method, n, k, r_n, tau`; quantities that are unavailable
/// (boundary counts) serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub theta_hat: f64,
    pub theta_bc: Option<f64>,
    pub bias_hat: Option<f64>,
    pub var_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub r_n: usize,
    pub tau: Option<f64>,

    #[serde(skip)]
    pub ci_method: Option<CiStyle>,
    #[serde(skip)]
    pub level: f64,
    #[serde(skip)]
    pub fpc_applied: bool,
    /// `r_n` is 0 or `n`: the delta-method bias and variance are singular.
    #[serde(skip)]
    pub boundary: bool,
    /// Bias-corrected value before clamping to `[0, 1]`, when clamping changed it.
    #[serde(skip)]
    pub theta_bc_unclamped: Option<f64>,
    #[serde(skip)]
    pub model: Option<MisrankingModel>,
}

impl EstimateReport {
    fn base(method: Method, theta_hat: f64, n: usize, k: usize, r_n: usize) -> Self {
        Self {
            theta_hat,
            theta_bc: None,
            bias_hat: None,
            var_hat: None,
            ci_low: None,
            ci_high: None,
            method,
            n,
            k,
            r_n,
            tau: None,
            ci_method: None,
            level: DEFAULT_LEVEL,
            fpc_applied: false,
            boundary: r_n == 0 || r_n == n,
            theta_bc_unclamped: None,
            model: None,
        }
    }

    fn set_bias(&mut self, bias: f64) {
        let raw = self.theta_hat - bias;
        let clamped = raw.clamp(0.0, 1.0);
        self.bias_hat = Some(bias);
        self.theta_bc = Some(clamped);
        self.theta_bc_unclamped = (clamped != raw).then_some(raw);
    }

    /// Attaches the interval of `style` at `level` to the report.
    pub fn with_interval(mut self, level: f64, style: CiStyle) -> Result<Self> {
        let (lo, hi) = confidence_interval(&self, level, style)?;
        self.ci_low = Some(lo);
        self.ci_high = Some(hi);
        self.ci_method = Some(style);
        self.level = level;
        Ok(self)
    }

    /// Re-estimates θ from a resampled count with this report's estimator.
    fn reestimate(&self, r: usize) -> Result<f64> {
        let n = self.n;
        match self.method {
            Method::Srs | Method::DustSrs => Ok(r as f64 / n as f64),
            Method::DustMns => g_k(r as f64 / n as f64, self.k as u32),
            Method::DustMnsImperfect => {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Model("report carries no misranking model".into()))?;
                invert_h(r, n, self.k as u32, model)
            }
        }
    }
}

/// `θ(1-θ)/n + θ(1-θ) lag_sum / n²`, times `(1 - f)` when a sampling
/// fraction is supplied.
pub fn var_srs_spatial(theta: f64, n: usize, lag_sum: f64, fpc: Option<f64>) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} is outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::argument("n must be at least 1"));
    }
    if !(lag_sum >= 0.0) {
        return Err(Error::argument(format!(
            "lag sum must be nonnegative, got {lag_sum}"
        )));
    }
    let nf = n as f64;
    let s2 = theta * (1.0 - theta);
    let v = s2 / nf + s2 * lag_sum / (nf * nf);
    match fpc {
        None => Ok(v),
        Some(f) if (0.0..=1.0).contains(&f) => Ok((1.0 - f) * v),
        Some(f) => Err(Error::domain(format!(
            "sampling fraction {f} is outside [0, 1]"
        ))),
    }
}

/// Realized `Σ_i Σ_{j≠i} η₀^{l_ij}` over the sampled units; unreachable pairs
/// (or pairs beyond `max_lag`) contribute 0.
pub fn realized_lag_sum(
    frame: &ArealFrame,
    units: &[usize],
    eta0: f64,
    max_lag: Option<u32>,
) -> f64 {
    if eta0 == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (a, &i) in units.iter().enumerate() {
        let lags = frame.lags_from(i, max_lag);
        for (b, &j) in units.iter().enumerate() {
            if a != b {
                if let Some(l) = lags[j] {
                    total += eta0.powi(l as i32);
                }
            }
        }
    }
    total
}

/// Lag sum implied by a common mean lag: `n(n-1) η₀^{l̄}`.
pub fn mean_lag_sum(n: usize, eta0: f64, mean_lag: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta0) {
        return Err(Error::domain(format!("eta0 = {eta0} is outside [0, 1)")));
    }
    if !(mean_lag >= 0.0) {
        return Err(Error::domain(format!(
            "mean lag must be nonnegative, got {mean_lag}"
        )));
    }
    let nf = n as f64;
    Ok(nf * (nf - 1.0).max(0.0) * eta0.powf(mean_lag))
}

fn estimate_mean(
    indicators: &[bool],
    method: Method,
    lag_sum: Option<f64>,
    fpc: Option<f64>,
) -> Result<EstimateReport> {
    if indicators.is_empty() {
        return Err(Error::argument("no indicators to estimate from"));
    }
    let n = indicators.len();
    let r_n = indicators.iter().filter(|&&z| z).count();
    let theta = r_n as f64 / n as f64;
    let mut report = EstimateReport::base(method, theta, n, 1, r_n);
    report.var_hat = Some(var_srs_spatial(theta, n, lag_sum.unwrap_or(0.0), fpc)?);
    report.fpc_applied = fpc.is_some();
    report.set_bias(0.0);
    if !report.boundary {
        report = report.with_interval(DEFAULT_LEVEL, CiStyle::Delta)?;
    }
    Ok(report)
}

/// Sample mean of the indicators. The variance uses the spatial lag sum when
/// one is supplied and the independence term otherwise.
pub fn estimate_srs(
    indicators: &[bool],
    lag_sum: Option<f64>,
    fpc: Option<f64>,
) -> Result<EstimateReport> {
    estimate_mean(indicators, Method::Srs, lag_sum, fpc)
}

/// The same mean estimator applied to a DUST-selected sample, with the
/// spatial covariance term taken as negligible.
pub fn estimate_dust_srs(indicators: &[bool], fpc: Option<f64>) -> Result<EstimateReport> {
    estimate_mean(indicators, Method::DustSrs, None, fpc)
}

fn check_counts(r_n: usize, n: usize, k: usize) -> Result<()> {
    if n == 0 || k == 0 {
        return Err(Error::argument("n and k must be at least 1"));
    }
    if r_n > n {
        return Err(Error::domain(format!("r_n = {r_n} exceeds n = {n}")));
    }
    if k > u32::MAX as usize {
        return Err(Error::domain("set size too large"));
    }
    Ok(())
}

/// Plug-in leading bias `(k-1)/(2k²n) (1-q̂)^{1/k-2} q̂(1-q̂)` at `q̂ = r_n/n`.
fn plugin_bias(q_hat: f64, n: usize, k: u32) -> Result<f64> {
    let (_, d2) = g_k_derivs(q_hat, k)?;
    Ok(0.5 * d2 * q_hat * (1.0 - q_hat) / n as f64)
}

/// Calibrated DUST-MNS estimate `θ̂ = 1 - (1 - r_n/n)^{1/k}` with plug-in
/// bias, bias-corrected value, delta variance and bias-corrected delta
/// interval at 95%.
pub fn estimate_dust_mns(r_n: usize, n: usize, k: usize) -> Result<EstimateReport> {
    check_counts(r_n, n, k)?;
    let kk = k as u32;
    let q_hat = r_n as f64 / n as f64;
    let theta = g_k(q_hat, kk)?;
    let mut report = EstimateReport::base(Method::DustMns, theta, n, k, r_n);
    if report.boundary {
        return Ok(report);
    }
    report.set_bias(plugin_bias(q_hat, n, kk)?);
    report.var_hat = Some(var_dust_mns(theta, n, k)?);
    report.with_interval(DEFAULT_LEVEL, CiStyle::DeltaBiasCorrected)
}

/// Bias-corrected estimate as a function of the count, with boundary counts
/// left uncorrected and the result clamped to `[0, 1]`.
pub fn bias_corrected_estimate(r_n: usize, n: usize, k: usize) -> Result<f64> {
    check_counts(r_n, n, k)?;
    let kk = k as u32;
    let q_hat = r_n as f64 / n as f64;
    let theta = g_k(q_hat, kk)?;
    if r_n == 0 || r_n == n {
        return Ok(theta);
    }
    Ok((theta - plugin_bias(q_hat, n, kk)?).clamp(0.0, 1.0))
}

fn check_theta_open(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain(format!("theta = {theta} is outside (0, 1)")));
    }
    Ok(())
}

/// `E[est(R)] - θ` for `R ~ Binomial(n, q_k(θ))`, summed exactly.
pub fn exact_bias_of<F>(n: usize, k: usize, theta: f64, mut estimator: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    check_theta_open(theta)?;
    check_counts(0, n, k)?;
    let q = q_k(theta, k as u32)?;
    let pmf = binom_pmf_vec(n as u64, q)?;
    let mut mean = 0.0;
    for (r, p) in pmf.iter().enumerate() {
        mean += p * estimator(r)?;
    }
    Ok(mean - theta)
}

/// Exact finite-sample bias of the calibrated DUST-MNS estimator.
pub fn exact_bias(n: usize, k: usize, theta: f64) -> Result<f64> {
    if k == 1 {
        check_theta_open(theta)?;
        return Ok(0.0);
    }
    let kk = k as u32;
    exact_bias_of(n, k, theta, |r| g_k(r as f64 / n as f64, kk))
}

/// Leading `O(1/n)` bias term `½ g_k''(q_k) q_k(1-q_k)/n` at the true θ.
pub fn leading_bias(n: usize, k: usize, theta: f64) -> Result<f64> {
    check_counts(0, n, k)?;
    if theta >= 1.0 {
        return Err(Error::domain("leading bias is singular at theta = 1"));
    }
    if theta < 0.0 {
        return Err(Error::domain(format!("theta = {theta} is negative")));
    }
    plugin_bias(q_k(theta, k as u32)?, n, k as u32)
}

/// Delta-method variance `[1-(1-θ)^k](1-θ)^{2-k} / (k² n)`; 0 at θ ∈ {0, 1}.
pub fn var_dust_mns(theta: f64, n: usize, k: usize) -> Result<f64> {
    check_counts(0, n, k)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} is outside [0, 1]")));
    }
    if theta == 0.0 || theta == 1.0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let q = q_k(theta, k as u32)?;
    let tail = ((2.0 - kf) * (-theta).ln_1p()).exp();
    Ok(q * tail / (kf * kf * n as f64))
}

fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "confidence level {level} is outside (0, 1)"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Confidence interval for θ; endpoints are clamped to `[0, 1]`.
///
/// Delta styles are unavailable at boundary counts and return
/// [`Error::Boundary`]; the bootstrap style works everywhere.
pub fn confidence_interval(
    report: &EstimateReport,
    level: f64,
    style: CiStyle,
) -> Result<(f64, f64)> {
    let z = z_quantile(level)?;
    let center = match style {
        CiStyle::Bootstrap { replicates, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ci = bootstrap_counts(report.r_n, report.n, level, replicates, &mut rng, |r| {
                report.reestimate(r)
            })?;
            return Ok((ci.low, ci.high));
        }
        CiStyle::Delta => report.theta_hat,
        CiStyle::DeltaBiasCorrected => match report.theta_bc {
            Some(bc) => bc,
            None => return Err(boundary_error(report)),
        },
    };
    let var = match report.var_hat {
        Some(v) if !report.boundary => v,
        _ => return Err(boundary_error(report)),
    };
    let half = z * var.sqrt();
    Ok((
        (center - half).clamp(0.0, 1.0),
        (center + half).clamp(0.0, 1.0),
    ))
}

fn boundary_error(report: &EstimateReport) -> Error {
    Error::Boundary(format!(
        "r_n = {} of n = {}: delta-method interval is singular; use the bootstrap interval",
        report.r_n, report.n
    ))
}

/// Percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Every resample gave the same estimate (all indicators equal).
    pub degenerate: bool,
}

/// Percentile bootstrap interval for the calibrated DUST-MNS estimator from
/// the `n` set-level indicators.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    indicators: &[bool],
    k: usize,
    level: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<BootstrapInterval> {
    if indicators.is_empty() {
        return Err(Error::argument("no indicators to resample"));
    }
    let n = indicators.len();
    check_counts(0, n, k)?;
    let r_n = indicators.iter().filter(|&&z| z).count();
    let kk = k as u32;
    bootstrap_counts(r_n, n, level, replicates, rng, |r| {
        g_k(r as f64 / n as f64, kk)
    })
}

/// Resamples `n` binary indicators (of which `r_n` are ones) with replacement.
///
/// The number of ones in such a resample is exactly `Binomial(n, r_n/n)`, so
/// each resample is drawn as one binomial variate. Resample `b` uses its own
/// generator stream derived from a base seed taken from `rng`, which keeps the
/// result independent of how the resamples are scheduled across threads.
pub fn bootstrap_counts<R, F>(
    r_n: usize,
    n: usize,
    level: f64,
    replicates: usize,
    rng: &mut R,
    estimator: F,
) -> Result<BootstrapInterval>
where
    R: Rng + ?Sized,
    F: Fn(usize) -> Result<f64> + Sync,
{
    if replicates < MIN_BOOTSTRAP_REPLICATES {
        return Err(Error::argument(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPLICATES} replicates, got {replicates}"
        )));
    }
    if n == 0 || r_n > n {
        return Err(Error::argument(format!(
            "invalid counts r_n = {r_n}, n = {n}"
        )));
    }
    let alpha = 1.0 - level;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "confidence level {level} is outside (0, 1)"
        )));
    }
    let base_seed: u64 = rng.random();
    let p_hat = r_n as f64 / n as f64;
    let binom = Binomial::new(n as u64, p_hat).map_err(|e| Error::domain(e.to_string()))?;

    // estimates for every possible count, computed once
    let table = (0..=n).map(&estimator).collect::<Result<Vec<f64>>>()?;
    let stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut stream = ChaCha8Rng::seed_from_u64(base_seed);
            stream.set_stream(b as u64);
            table[binom.sample(&mut stream) as usize]
        })
        .collect();
    let low = empirical_quantile(&stats, alpha / 2.0)?;
    let high = empirical_quantile(&stats, 1.0 - alpha / 2.0)?;
    Ok(BootstrapInterval {
        low: low.clamp(0.0, 1.0),
        high: high.clamp(0.0, 1.0),
        degenerate: r_n == 0 || r_n == n,
    })
}

/// Nominee exceedance probability `h(θ)` under a misranking model.
pub fn h_map(theta: f64, model: &MisrankingModel, k: u32) -> Result<f64> {
    model.validate(k)?;
    h_unchecked(theta, model, k)
}

fn h_unchecked(theta: f64, model: &MisrankingModel, k: u32) -> Result<f64> {
    match model {
        MisrankingModel::Tau(tau) => {
            let t2 = tau * tau;
            Ok(t2 * q_k(theta, k)? + (1.0 - t2) * theta)
        }
        MisrankingModel::Matrix(nu) => {
            let last = k as usize - 1;
            let mut total = 0.0;
            for (r, row) in nu.iter().enumerate() {
                total += row[last] * order_stat_exceed(r as u32 + 1, k, theta)?;
            }
            Ok(total)
        }
    }
}

/// `dh/dθ`, differentiated analytically.
pub fn h_slope(theta: f64, model: &MisrankingModel, k: u32) -> Result<f64> {
    match model {
        MisrankingModel::Tau(tau) => {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::domain(format!("theta = {theta} is outside [0, 1]")));
            }
            let t2 = tau * tau;
            let kf = f64::from(k);
            let dq = kf * ((kf - 1.0) * (-theta).ln_1p()).exp();
            Ok(t2 * dq + (1.0 - t2))
        }
        MisrankingModel::Matrix(nu) => {
            let last = k as usize - 1;
            let mut total = 0.0;
            for (r, row) in nu.iter().enumerate() {
                total += row[last] * order_stat_exceed_slope(r as u32 + 1, k, theta)?;
            }
            Ok(total)
        }
    }
}

fn h_curvature(theta: f64, model: &MisrankingModel, k: u32) -> Result<f64> {
    match model {
        MisrankingModel::Tau(tau) => {
            let kf = f64::from(k);
            if k == 1 {
                return Ok(0.0);
            }
            let d2q = -kf * (kf - 1.0) * ((kf - 2.0) * (-theta).ln_1p()).exp();
            Ok(tau * tau * d2q)
        }
        MisrankingModel::Matrix(nu) => {
            let last = k as usize - 1;
            let mut total = 0.0;
            for (r, row) in nu.iter().enumerate() {
                total += row[last] * order_stat_exceed_curvature(r as u32 + 1, k, theta)?;
            }
            Ok(total)
        }
    }
}

/// Verifies on a dense grid that `h` has a positive slope on `(0, 1)`, so
/// the calibration root is unique.
pub fn check_h_monotone(model: &MisrankingModel, k: u32) -> Result<()> {
    model.validate(k)?;
    for i in 1..MONOTONE_GRID {
        let theta = i as f64 / MONOTONE_GRID as f64;
        let s = h_slope(theta, model, k)?;
        if !(s > 0.0) {
            return Err(Error::Model(format!(
                "calibration map is not strictly increasing (slope {s} at theta = {theta})"
            )));
        }
    }
    Ok(())
}

fn invert_h(r_n: usize, n: usize, k: u32, model: &MisrankingModel) -> Result<f64> {
    let target = r_n as f64 / n as f64;
    if r_n == 0 {
        return Ok(0.0);
    }
    if r_n == n {
        return Ok(1.0);
    }
    if let MisrankingModel::Tau(t) = model {
        if *t == 0.0 {
            return Ok(target);
        }
    }
    let spec = RootSolveSpec::new(0.0, 1.0).with_tol(1e-14);
    let mut failure = None;
    let root = solve_root(
        |theta| match h_unchecked(theta, model, k) {
            Ok(h) => h - target,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &spec,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root.map_err(|e| Error::Calibration(format!("cannot invert h at {target}: {e}")))
}

/// Imperfect-ranking estimate `θ̂ = h⁻¹(r_n/n)` with delta variance
/// `q(1-q) / (n h'(θ̂)²)` and second-order plug-in bias
/// `-½ h''/h'³ q(1-q)/n`.
pub fn estimate_imperfect(
    r_n: usize,
    n: usize,
    k: usize,
    model: &MisrankingModel,
) -> Result<EstimateReport> {
    check_counts(r_n, n, k)?;
    let kk = k as u32;
    check_h_monotone(model, kk)?;
    let theta = invert_h(r_n, n, kk, model)?;
    let mut report = EstimateReport::base(Method::DustMnsImperfect, theta, n, k, r_n);
    report.tau = model.tau();
    report.model = Some(model.clone());
    if report.boundary {
        return Ok(report);
    }
    let q = r_n as f64 / n as f64;
    let spread = q * (1.0 - q) / n as f64;
    let slope = h_slope(theta, model, kk)?;
    if !(slope > 0.0) {
        return Err(Error::Calibration(format!(
            "zero calibration slope at theta = {theta}"
        )));
    }
    let curvature = h_curvature(theta, model, kk)?;
    report.set_bias(-0.5 * curvature / slope.powi(3) * spread);
    report.var_hat = Some(spread / (slope * slope));
    report.with_interval(DEFAULT_LEVEL, CiStyle::DeltaBiasCorrected)
}
