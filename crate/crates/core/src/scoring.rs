//! CRPS from predictive samples and leave-one-time-point-out evaluation.

use serde::{Deserialize, Serialize};

use crate::compare::{fit_model, FitConfig, ModelKind};
use crate::data::DissolutionDataset;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng;

/// (1/m) Σ|x_i - y| - (1/2m²) ΣΣ|x_i - x_j|.
///
/// The double sum uses the sorted-sample identity
/// ΣΣ|x_i - x_j| = 2 Σ_k (2k - m + 1) x_(k), so the cost is O(m log m).
pub fn crps_from_samples(samples: &[f64], y: f64) -> f64 {
    let m = samples.len();
    if m == 0 {
        return f64::NAN;
    }
    let mf = m as f64;
    let abs_err = samples.iter().map(|x| (x - y).abs()).sum::<f64>() / mf;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 - mf + 1.0) * x)
        .sum::<f64>()
        / (mf * mf);
    (abs_err - spread).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrpsReport {
    pub model: ModelKind,
    pub times: Vec<f64>,
    /// Mean CRPS over units at each held-out time; `None` when that fold failed.
    pub per_time: Vec<Option<f64>>,
    /// CRPS per held-out time and unit, when requested.
    pub per_unit: Option<Vec<Vec<f64>>>,
    /// Mean over the successful folds.
    pub mean: f64,
    pub failed_folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooConfig {
    pub fit: FitConfig,
    pub keep_per_unit: bool,
    pub workers: Option<usize>,
}

impl Default for LooConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            keep_per_unit: false,
            workers: None,
        }
    }
}

fn fold(ds: &DissolutionDataset, i: usize, kind: ModelKind, cfg: &FitConfig, seed: u64) -> Result<Vec<f64>> {
    let train = ds.without_time(i)?;
    let t = ds.times[i];
    let fitted = fit_model(&train, kind, cfg, rng::derive_seed(seed, &[i as u64, 0]))?;
    let draws = fitted.draw_paths(&[t], cfg.samples_m, rng::derive_seed(seed, &[i as u64, 1]))?;
    let samples: Vec<f64> = draws.column(0).iter().copied().collect();
    Ok(ds.values.column(i).iter().map(|&y| crps_from_samples(&samples, y)).collect())
}

/// Refits without each time point in turn and scores the prediction of f at
/// the held-out time against every unit observed there.
pub fn loo_crps(ds: &DissolutionDataset, kind: ModelKind, cfg: &LooConfig, seed: u64) -> Result<CrpsReport> {
    let p = ds.n_times();
    if p < 3 {
        return Err(Error::InsufficientReplication(format!(
            "leave-one-out needs at least 3 time points, got {p}"
        )));
    }
    let folds = map_indexed(p, cfg.workers, |i| fold(ds, i, kind, &cfg.fit, seed));
    let mut per_time = Vec::with_capacity(p);
    let mut per_unit = Vec::with_capacity(p);
    let mut failed_folds = Vec::new();
    for (i, f) in folds.into_iter().enumerate() {
        match f {
            Ok(scores) => {
                per_time.push(Some(scores.iter().sum::<f64>() / scores.len() as f64));
                per_unit.push(scores);
            }
            Err(e) => {
                log::warn!("LOO fold {i} failed: {e}");
                per_time.push(None);
                per_unit.push(vec![]);
                failed_folds.push(i);
            }
        }
    }
    let ok: Vec<f64> = per_time.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::Estimation("every leave-one-out fold failed".into()));
    }
    Ok(CrpsReport {
        model: kind,
        times: ds.times.clone(),
        per_time,
        per_unit: cfg.keep_per_unit.then_some(per_unit),
        mean: ok.iter().sum::<f64>() / ok.len() as f64,
        failed_folds,
    })
}
