//! Profile comparison statistics: discrete f2, the integral f2 target, the
//! posterior f2 and δ distributions, and the two MSD tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{pooled_covariance, AverageProfile, DissolutionDataset};
use crate::error::{Error, Result};
use crate::gp::{sample_posterior_rng, GpPosterior};
use crate::linalg::cholesky_with_jitter;
use crate::rng;
use crate::simulation::Curve;
use crate::stats::{adaptive_simpson, chi2_quantile, f_quantile, sample_quantile};

pub const SIMILARITY_THRESHOLD: f64 = 50.0;
pub const DELTA_LIMIT: f64 = 15.0;
/// Allowed per-time-point difference (percent) behind the MSD limits.
pub const MSD_TOLERANCE: f64 = 10.0;
const MSD_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2Config {
    /// Per-time weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    pub threshold: f64,
    pub grid_r: usize,
    pub samples_m: usize,
}

impl Default for F2Config {
    fn default() -> Self {
        Self {
            weights: None,
            threshold: SIMILARITY_THRESHOLD,
            grid_r: 500,
            samples_m: 1000,
        }
    }
}

impl F2Config {
    pub fn validate(&self) -> Result<()> {
        if self.grid_r < 2 || self.samples_m < 1 {
            return Err(Error::Config("f2 needs grid_r >= 2 and samples_m >= 1".into()));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::Config("f2 weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Maps a mean squared difference onto the f2 scale.
pub fn f2_from_msd(msd: f64) -> f64 {
    50.0 * (100.0 / (1.0 + msd).sqrt()).log10()
}

/// 50 log10(100 (1 + (1/p) Σ w_i Δ_i²)^{-1/2}) on the average profiles.
pub fn f2_discrete(reference: &AverageProfile, test: &AverageProfile, cfg: &F2Config) -> Result<f64> {
    let p = reference.means.len();
    let same_grid = p == test.means.len()
        && reference
            .times
            .iter()
            .zip(&test.times)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    if !same_grid || p == 0 {
        return Err(Error::Structure("f2 needs identical, nonempty time grids".into()));
    }
    if let Some(w) = &cfg.weights {
        if w.len() != p {
            return Err(Error::Structure(format!("expected {p} weights, got {}", w.len())));
        }
    }
    let sum: f64 = (0..p)
        .map(|i| {
            let w = cfg.weights.as_ref().map_or(1.0, |w| w[i]);
            w * (reference.means[i] - test.means[i]).powi(2)
        })
        .sum();
    Ok(f2_from_msd(sum / p as f64))
}

/// f2 of the continuous mean squared difference of two curves on `[t1, tp]`.
pub fn f2_integral_truth(reference: &Curve, test: &Curve, t1: f64, tp: f64) -> f64 {
    let integrand = |t: f64| (reference.eval(t) - test.eval(t)).powi(2);
    let integral = adaptive_simpson(&integrand, t1, tp, 1e-10);
    f2_from_msd(integral / (tp - t1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2Posterior {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub interval95: (f64, f64),
    pub probability_similar: f64,
}

impl F2Posterior {
    pub fn from_samples(samples: Vec<f64>, threshold: f64) -> Self {
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let probability_similar = samples.iter().filter(|&&s| s >= threshold).count() as f64 / m;
        let interval95 = (sample_quantile(&samples, 0.025), sample_quantile(&samples, 0.975));
        Self {
            samples,
            mean,
            interval95,
            probability_similar,
        }
    }
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() || a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Structure(format!(
            "paired sample matrices differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Per-row f2 of paired sample paths (rows are draws, columns grid points).
pub fn f2_from_paths(fr: &DMatrix<f64>, ft: &DMatrix<f64>, threshold: f64) -> Result<F2Posterior> {
    check_pair(fr, ft)?;
    let r = fr.ncols() as f64;
    let samples = (0..fr.nrows())
        .map(|i| {
            let ss: f64 = fr.row(i).iter().zip(ft.row(i).iter()).map(|(a, b)| (a - b).powi(2)).sum();
            f2_from_msd(ss / r)
        })
        .collect();
    Ok(F2Posterior::from_samples(samples, threshold))
}

fn check_grids(a: &GpPosterior, b: &GpPosterior) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Structure("reference and test posteriors use different grids".into()));
    }
    Ok(())
}

/// Draws `m` independent path pairs from the two posteriors.
pub fn paired_paths(reference: &GpPosterior, test: &GpPosterior, m: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_grids(reference, test)?;
    let fr = sample_posterior_rng(reference, m, &mut rng::stream(seed, 0), false)?;
    let ft = sample_posterior_rng(test, m, &mut rng::stream(seed, 1), false)?;
    Ok((fr, ft))
}

pub fn f2_posterior(reference: &GpPosterior, test: &GpPosterior, cfg: &F2Config, seed: u64) -> Result<F2Posterior> {
    cfg.validate()?;
    let (fr, ft) = paired_paths(reference, test, cfg.samples_m, seed)?;
    f2_from_paths(&fr, &ft, cfg.threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub samples: Vec<f64>,
    pub probability_below: f64,
}

pub fn delta_from_paths(fr: &DMatrix<f64>, ft: &DMatrix<f64>) -> Result<DeltaResult> {
    check_pair(fr, ft)?;
    let samples: Vec<f64> = (0..fr.nrows())
        .map(|i| (fr.row(i) - ft.row(i)).amax())
        .collect();
    let probability_below = samples.iter().filter(|&&d| d < DELTA_LIMIT).count() as f64 / samples.len() as f64;
    Ok(DeltaResult {
        samples,
        probability_below,
    })
}

/// Posterior distribution of max_t |f_R(t) - f_T(t)| and P(δ < 15).
pub fn delta_test(reference: &GpPosterior, test: &GpPosterior, m: usize, seed: u64) -> Result<DeltaResult> {
    if m == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let (fr, ft) = paired_paths(reference, test, m, seed)?;
    delta_from_paths(&fr, &ft)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MsdVariant {
    Tsong,
    Lsgp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdResult {
    pub variant: MsdVariant,
    pub d_point: f64,
    pub d_lower: f64,
    pub d_upper: f64,
    pub d_limit: f64,
    /// The F (Tsong) or χ² (LSGP) quantile used for the region.
    pub quantile: f64,
    pub decision: bool,
    /// Diagonal jitter added to S before factorization.
    pub jitter: f64,
}

fn factor_s(s: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    let p = s.nrows();
    let scale = s.trace() / p as f64;
    cholesky_with_jitter(s, scale, MSD_JITTER, MSD_JITTER, "MSD covariance S")
}

/// Tsong et al. multivariate statistical distance with its F-based region.
pub fn tsong_msd(reference: &DissolutionDataset, test: &DissolutionDataset, alpha: f64) -> Result<MsdResult> {
    if reference.n_units() != test.n_units() {
        return Err(Error::Structure("Tsong MSD needs equal group sizes".into()));
    }
    let n = reference.n_units() as f64;
    let p = reference.n_times() as f64;
    let df2 = 2.0 * n - p - 1.0;
    if df2 <= 0.0 {
        return Err(Error::DegreesOfFreedom(format!("2n - p - 1 = {df2}")));
    }
    let pooled = pooled_covariance(reference, test)?;
    let diff = reference.mean_vector() - test.mean_vector();
    tsong_from_parts(&pooled.s, &diff, reference.n_units(), alpha)
}

/// Tsong MSD from a pooled covariance, a mean difference and the group size.
pub fn tsong_from_parts(s: &DMatrix<f64>, diff: &DVector<f64>, n: usize, alpha: f64) -> Result<MsdResult> {
    let nf = n as f64;
    let p = diff.len() as f64;
    let df2 = 2.0 * nf - p - 1.0;
    if df2 <= 0.0 {
        return Err(Error::DegreesOfFreedom(format!("2n - p - 1 = {df2}")));
    }
    let (chol, jitter) = factor_s(s)?;
    let d_point = diff.dot(&chol.solve(diff)).max(0.0).sqrt();
    let k = (nf * nf / (2.0 * nf)) * (df2 / ((2.0 * nf - 2.0) * p));
    let quantile = f_quantile(1.0 - alpha, p, df2)?;
    let radius = (quantile / k).sqrt();
    let v = DVector::from_element(diff.len(), MSD_TOLERANCE);
    let d_limit = v.dot(&chol.solve(&v)).sqrt();
    let d_upper = d_point + radius;
    Ok(MsdResult {
        variant: MsdVariant::Tsong,
        d_point,
        d_lower: (d_point - radius).max(0.0),
        d_upper,
        d_limit,
        quantile,
        decision: d_upper <= d_limit,
        jitter,
    })
}

/// MSD test on two posteriors evaluated at the observed times.
pub fn lsgp_msd(reference: &GpPosterior, test: &GpPosterior, delta: f64) -> Result<MsdResult> {
    check_grids(reference, test)?;
    let s = &reference.cov + &test.cov;
    let diff = &reference.mean - &test.mean;
    lsgp_msd_from_parts(&s, &diff, delta)
}

pub fn lsgp_msd_from_parts(s: &DMatrix<f64>, diff: &DVector<f64>, delta: f64) -> Result<MsdResult> {
    let p = diff.len();
    let (chol, jitter) = factor_s(s)?;
    let d_point = diff.dot(&chol.solve(diff)).max(0.0).sqrt();
    let quantile = chi2_quantile(1.0 - delta, p as f64)?;
    let radius = quantile.sqrt();
    let s_inv = chol.inverse();
    let d_limit = (0..p)
        .map(|i| (MSD_TOLERANCE * MSD_TOLERANCE * s_inv[(i, i)]).sqrt())
        .fold(f64::INFINITY, f64::min);
    let d_upper = d_point + radius;
    Ok(MsdResult {
        variant: MsdVariant::Lsgp,
        d_point,
        d_lower: (d_point - radius).max(0.0),
        d_upper,
        d_limit,
        quantile,
        decision: d_upper <= d_limit,
        jitter,
    })
}

/// One line of a comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub method: String,
    pub point_estimate: f64,
    pub interval: Option<(f64, f64)>,
    pub probability: Option<f64>,
    pub decision: bool,
    pub config: serde_json::Value,
}

impl TestSummary {
    pub fn from_f2(method: &str, f2: &F2Posterior, cfg: &F2Config) -> Self {
        Self {
            method: method.to_string(),
            point_estimate: f2.mean,
            interval: Some(f2.interval95),
            probability: Some(f2.probability_similar),
            decision: f2.probability_similar >= 0.5,
            config: serde_json::json!({
                "threshold": cfg.threshold,
                "grid_r": cfg.grid_r,
                "samples_m": cfg.samples_m,
            }),
        }
    }

    pub fn from_delta(method: &str, d: &DeltaResult) -> Self {
        let mean = d.samples.iter().sum::<f64>() / d.samples.len() as f64;
        Self {
            method: method.to_string(),
            point_estimate: mean,
            interval: Some((sample_quantile(&d.samples, 0.025), sample_quantile(&d.samples, 0.975))),
            probability: Some(d.probability_below),
            decision: d.probability_below >= 0.5,
            config: serde_json::json!({ "limit": DELTA_LIMIT, "samples_m": d.samples.len() }),
        }
    }

    pub fn from_msd(r: &MsdResult, level: f64) -> Self {
        let method = match r.variant {
            MsdVariant::Tsong => "msd-tsong",
            MsdVariant::Lsgp => "msd-lsgp",
        };
        Self {
            method: method.to_string(),
            point_estimate: r.d_point,
            interval: Some((r.d_lower, r.d_upper)),
            probability: None,
            decision: r.decision,
            config: serde_json::json!({
                "confidence": level,
                "d_limit": r.d_limit,
                "quantile": r.quantile,
                "jitter": r.jitter,
            }),
        }
    }
}
