//! Priors, empirical-Bayes noise centering and multi-restart MAP fitting.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DissolutionDataset;
use crate::error::{Error, Result};
use crate::gp::{log_marginal_likelihood_summary, ProfileSummary};
use crate::kernels::{LsgpHyperparams, SplineOrder};
use crate::optim::NelderMead;
use crate::rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Standard normal 99th percentile.
const Z99: f64 = 2.326_347_874_040_841;

/// Floor used when a time point has zero spread.
pub const ZERO_VARIANCE_FLOOR: f64 = 1e-8;

/// Prior locations and scales: log-normal for α1, α2, β; normal for a, b;
/// half-Cauchy(0, `tau2_scale`) for τ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub m: [f64; 5],
    pub s: [f64; 5],
    pub tau2_scale: f64,
}

impl PriorSpec {
    pub fn new(a_bar: f64, b_bar: f64) -> Self {
        Self {
            m: [76.56f64.ln(), 100f64.ln(), 0.196f64.ln(), a_bar, b_bar],
            s: [3.0, 3.0, 3.0, 1.25, 1.25],
            tau2_scale: 5.0,
        }
    }

    /// Default prior with (ā, b̄) from [`empirical_bayes_ab`].
    pub fn from_dataset(ds: &DissolutionDataset) -> Result<Self> {
        let (a, b) = empirical_bayes_ab(ds)?;
        Ok(Self::new(a, b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.iter().chain([&self.tau2_scale]).any(|s| !(*s > 0.0)) || self.m.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("prior scales must be positive and locations finite".into()));
        }
        Ok(())
    }
}

/// OLS intercept and slope of the log per-time population variance against time.
pub fn empirical_bayes_ab(ds: &DissolutionDataset) -> Result<(f64, f64)> {
    if ds.n_units() < 2 {
        return Err(Error::InsufficientReplication(format!(
            "group {}: empirical Bayes needs at least 2 units",
            ds.group_label
        )));
    }
    if ds.n_times() < 2 {
        return Err(Error::Domain("empirical Bayes needs at least 2 time points".into()));
    }
    let s = ProfileSummary::from_dataset(ds);
    let n = s.n as f64;
    let phi: Vec<f64> = s
        .scatter
        .iter()
        .zip(&s.times)
        .map(|(ss, t)| {
            let v = ss / n;
            if v > 0.0 {
                v.ln()
            } else {
                log::warn!("group {}: zero spread at t = {t}; log variance floored", ds.group_label);
                ZERO_VARIANCE_FLOOR.ln()
            }
        })
        .collect();
    Ok(ols_line(&s.times, &phi))
}

/// Intercept and slope of the least-squares line through (x, y).
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let p = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let den = p * sxx - sx * sx;
    ((sy * sxx - sx * sxy) / den, (p * sxy - sx * sy) / den)
}

pub fn lognormal_ln_pdf(x: f64, m: f64, s: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x.ln() - m) / s;
    -0.5 * z * z - x.ln() - s.ln() - LN_SQRT_2PI
}

pub fn normal_ln_pdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    -0.5 * z * z - s.ln() - LN_SQRT_2PI
}

/// Half-Cauchy on x ≥ 0 with location 0 and the given scale.
pub fn half_cauchy_ln_pdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 || x.is_nan() {
        return f64::NEG_INFINITY;
    }
    (2.0 / (std::f64::consts::PI * scale * (1.0 + (x / scale).powi(2)))).ln()
}

pub fn log_prior(h: &LsgpHyperparams, spec: &PriorSpec) -> f64 {
    if !(h.alpha1 > 0.0 && h.alpha2 > 0.0 && h.beta > 0.0 && h.tau2 >= 0.0) {
        return f64::NEG_INFINITY;
    }
    lognormal_ln_pdf(h.alpha1, spec.m[0], spec.s[0])
        + lognormal_ln_pdf(h.alpha2, spec.m[1], spec.s[1])
        + lognormal_ln_pdf(h.beta, spec.m[2], spec.s[2])
        + normal_ln_pdf(h.a, spec.m[3], spec.s[3])
        + normal_ln_pdf(h.b, spec.m[4], spec.s[4])
        + half_cauchy_ln_pdf(h.tau2, spec.tau2_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Lower bound on τ²; the search never goes below it.
    pub tau2_floor: f64,
    pub max_iter: usize,
    pub f_tol: f64,
    pub order: SplineOrder,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            tau2_floor: 1e-4,
            max_iter: 2000,
            f_tol: 1e-8,
            order: SplineOrder::Cubic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub index: usize,
    pub start_log_joint: f64,
    pub best_log_joint: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub hyperparams: LsgpHyperparams,
    pub log_joint: f64,
    pub restart_index: usize,
    pub converged: bool,
    pub trace: Vec<RestartTrace>,
}

/// Unconstrained coordinates [ln α1, ln α2, ln β, ln τ², a, b].
pub fn to_unconstrained(h: &LsgpHyperparams) -> [f64; 6] {
    [h.alpha1.ln(), h.alpha2.ln(), h.beta.ln(), h.tau2.ln(), h.a, h.b]
}

pub fn from_unconstrained(x: &[f64], tau2_floor: f64) -> LsgpHyperparams {
    LsgpHyperparams {
        alpha1: x[0].exp(),
        alpha2: x[1].exp(),
        beta: x[2].exp(),
        tau2: x[3].exp().max(tau2_floor),
        a: x[4],
        b: x[5],
    }
}

/// Log posterior (up to a constant) of θ; −∞ where the model cannot be evaluated.
pub fn log_joint(s: &ProfileSummary, h: &LsgpHyperparams, spec: &PriorSpec, order: SplineOrder) -> f64 {
    let lp = log_prior(h, spec);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    match log_marginal_likelihood_summary(s, h, order) {
        Ok(l) if l.is_finite() => l + lp,
        _ => f64::NEG_INFINITY,
    }
}

/// Starting point for restart `index`: prior medians for restart 0, otherwise
/// a prior draw clipped to the central 98% of each marginal.
fn restart_start(spec: &PriorSpec, index: usize, seed: u64) -> [f64; 6] {
    let median_tau2 = spec.tau2_scale;
    if index == 0 {
        return [spec.m[0], spec.m[1], spec.m[2], median_tau2.ln(), spec.m[3], spec.m[4]];
    }
    let mut r = rng::stream(seed, index as u64);
    let mut z = || -> f64 { r.sample::<f64, _>(StandardNormal).clamp(-Z99, Z99) };
    let log_alpha1 = spec.m[0] + spec.s[0] * z();
    let log_alpha2 = spec.m[1] + spec.s[1] * z();
    let log_beta = spec.m[2] + spec.s[2] * z();
    let a = spec.m[3] + spec.s[3] * z();
    let b = spec.m[4] + spec.s[4] * z();
    // half-Cauchy quantile at u in [0.01, 0.99]
    let u: f64 = rng::stream(seed, 1_000_000 + index as u64).random::<f64>() * 0.98 + 0.01;
    let tau2 = spec.tau2_scale * (std::f64::consts::FRAC_PI_2 * u).tan();
    [log_alpha1, log_alpha2, log_beta, tau2.ln(), a, b]
}

pub fn map_fit(ds: &DissolutionDataset, spec: &PriorSpec, restarts: usize, seed: u64) -> Result<MapResult> {
    map_fit_with(
        ds,
        spec,
        &MapConfig {
            restarts,
            seed,
            ..MapConfig::default()
        },
    )
}

pub fn map_fit_with(ds: &DissolutionDataset, spec: &PriorSpec, cfg: &MapConfig) -> Result<MapResult> {
    map_fit_summary(&ProfileSummary::from_dataset(ds), spec, cfg)
}

pub fn map_fit_summary(s: &ProfileSummary, spec: &PriorSpec, cfg: &MapConfig) -> Result<MapResult> {
    if cfg.restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    spec.validate()?;
    let objective = |x: &[f64]| -log_joint(s, &from_unconstrained(x, cfg.tau2_floor), spec, cfg.order);
    let step: Vec<f64> = vec![
        spec.s[0].min(0.5),
        spec.s[1].min(0.5),
        spec.s[2].min(0.5),
        1.0,
        spec.s[3].min(0.5),
        spec.s[4].min(0.05),
    ];
    let nm = NelderMead {
        max_iter: cfg.max_iter,
        f_tol: cfg.f_tol,
        step,
    };

    let mut trace = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(f64, Vec<f64>, usize, bool)> = None;
    for index in 0..cfg.restarts {
        let x0 = restart_start(spec, index, cfg.seed);
        let start = -objective(&x0);
        let res = nm.minimize(objective, &x0);
        let value = -res.fx;
        trace.push(RestartTrace {
            index,
            start_log_joint: start,
            best_log_joint: value,
            converged: res.converged,
            iterations: res.iterations,
        });
        if value.is_finite() && best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, res.x, index, res.converged));
        }
    }
    let Some((log_joint, x, restart_index, converged)) = best else {
        return Err(Error::Estimation(format!(
            "no restart reached a finite objective ({} restarts)",
            cfg.restarts
        )));
    };
    Ok(MapResult {
        hyperparams: from_unconstrained(&x, cfg.tau2_floor),
        log_joint,
        restart_index,
        converged,
        trace,
    })
}
