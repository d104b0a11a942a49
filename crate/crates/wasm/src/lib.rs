//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every export takes plain values and returns a JSON string, so the page
//! needs no generated TypeScript types. The `*_json` functions hold the logic
//! and are what the native tests exercise.

use dissolve_gp::compare::{compare_groups, fit_model, CurveSeries, FitConfig, FittedModel, ModelKind, TestKind};
use dissolve_gp::data::{average_profile, parse_groups, CsvFormat};
use dissolve_gp::gp::linspace;
use dissolve_gp::simulation::{bias_sweep, Curve};
use dissolve_gp::{fixtures, DissolutionDataset};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn groups(csv: &str) -> Result<Vec<DissolutionDataset>, String> {
    parse_groups(csv.as_bytes(), &CsvFormat::Long).map_err(|e| e.to_string())
}

fn demo_config(grid_r: usize, samples_m: usize) -> Result<FitConfig, String> {
    if grid_r < 2 || samples_m == 0 {
        return Err("grid points must be at least 2 and samples at least 1".into());
    }
    Ok(FitConfig { grid_r, samples_m, ..FitConfig::default() })
}

/// Long-format CSV of a bundled dataset ("dataset1" or "dataset2").
#[wasm_bindgen]
pub fn bundled_csv(name: &str) -> String {
    match name {
        "dataset2" => fixtures::DATASET2_CSV.to_string(),
        _ => fixtures::DATASET1_CSV.to_string(),
    }
}

pub fn fit_group_json(csv: &str, group: &str, grid_r: usize, seed: u64) -> Result<String, String> {
    let all = groups(csv)?;
    let ds = if group.is_empty() {
        all.into_iter().next().ok_or("no data")?
    } else {
        all.into_iter().find(|g| g.group_label == group).ok_or_else(|| format!("no group '{group}'"))?
    };
    let cfg = demo_config(grid_r, 1)?;
    let fitted = fit_model(&ds, ModelKind::Lsgp, &cfg, seed).map_err(|e| e.to_string())?;
    let FittedModel::Lsgp { map, .. } = &fitted else { unreachable!("lsgp requested") };
    let t_end = *ds.times.last().expect("nonempty");
    let grid = linspace(0.0, t_end, grid_r);
    let post = fitted.lsgp_posterior(&grid).map_err(|e| e.to_string())?.expect("lsgp posterior");
    let prof = average_profile(&ds);
    Ok(json!({
        "group": ds.group_label,
        "hyperparams": map.hyperparams,
        "series": CurveSeries::from_posterior(&post),
        "observed": { "times": prof.times, "means": prof.means, "units": ds.values.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>() },
    })
    .to_string())
}

/// MAP fit of one group and its posterior curve on `grid_r` points.
#[wasm_bindgen]
pub fn fit_group(csv: &str, group: &str, grid_r: usize, seed: u64) -> Result<String, JsError> {
    fit_group_json(csv, group, grid_r, seed).map_err(|e| JsError::new(&e))
}

pub fn compare_f2_json(csv: &str, grid_r: usize, samples_m: usize, seed: u64) -> Result<String, String> {
    let mut all = groups(csv)?;
    if all.len() != 2 {
        return Err(format!("expected two groups (reference first), found {}", all.len()));
    }
    let test = all.pop().expect("two");
    let reference = all.pop().expect("two");
    let cfg = demo_config(grid_r, samples_m)?;
    let rep = compare_groups(&reference, &test, ModelKind::Lsgp, &[TestKind::F2, TestKind::Delta], &cfg, seed)
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&rep).map_err(|e| e.to_string())
}

/// Posterior f2 and δ comparison of the two groups in a long CSV.
#[wasm_bindgen]
pub fn compare_f2(csv: &str, grid_r: usize, samples_m: usize, seed: u64) -> Result<String, JsError> {
    compare_f2_json(csv, grid_r, samples_m, seed).map_err(|e| JsError::new(&e))
}

pub fn bias_sweep_json(reference: &[f64], test: &[f64], p_min: usize, p_max: usize, t1: f64, tp: f64) -> Result<String, String> {
    let curve = |v: &[f64]| -> Result<Curve, String> {
        let [alpha1, alpha2, beta] = v else {
            return Err("a logistic curve needs alpha1, alpha2 and beta".into());
        };
        let c = Curve::Logistic { alpha1: *alpha1, alpha2: *alpha2, beta: *beta };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    };
    if p_min < 2 || p_min > p_max {
        return Err("need 2 <= p_min <= p_max".into());
    }
    let (r, t) = (curve(reference)?, curve(test)?);
    let ps: Vec<usize> = (p_min..=p_max).collect();
    let sweep = bias_sweep(&r, &t, &ps, t1, tp).map_err(|e| e.to_string())?;
    let grid = linspace(t1, tp, 200);
    Ok(json!({
        "truth": sweep.truth,
        "points": sweep.points,
        "curves": {
            "t": grid,
            "reference": grid.iter().map(|&x| r.eval(x)).collect::<Vec<_>>(),
            "test": grid.iter().map(|&x| t.eval(x)).collect::<Vec<_>>(),
        },
    })
    .to_string())
}

/// Discrete f2 against the number of sampling points for two logistic curves.
#[wasm_bindgen]
pub fn bias_sweep_series(reference: &[f64], test: &[f64], p_min: usize, p_max: usize, t1: f64, tp: f64) -> Result<String, JsError> {
    bias_sweep_json(reference, test, p_min, p_max, t1, tp).map_err(|e| JsError::new(&e))
}
