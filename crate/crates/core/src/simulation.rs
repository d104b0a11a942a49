//! Synthetic data generators, Monte-Carlo studies and the f2 bias sweep.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compare::{fit_model, fitted_paths, comparison_grid, FitConfig, ModelKind};
use crate::data::{average_profile, DissolutionDataset};
use crate::error::{Error, Result};
use crate::gp::linspace;
use crate::parallel::map_indexed;
use crate::rng;
use crate::scoring::{loo_crps, LooConfig};
use crate::similarity::{f2_discrete, f2_from_paths, f2_integral_truth, lsgp_msd, F2Config, SIMILARITY_THRESHOLD};
use crate::stats::{mean, sample_variance};

/// A noiseless dissolution curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Curve {
    /// α1 / (1 + α2 e^{-βt})
    Logistic { alpha1: f64, alpha2: f64, beta: f64 },
    /// √(ωt)
    Higuchi { omega: f64 },
}

impl Curve {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Curve::Logistic { alpha1, alpha2, beta } => crate::kernels::logistic(t, alpha1, alpha2, beta),
            Curve::Higuchi { omega } => (omega * t).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Curve::Logistic { alpha1, alpha2, beta } => alpha1 > 0.0 && alpha2 > 0.0 && beta > 0.0,
            Curve::Higuchi { omega } => omega > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("curve parameters must be positive: {self:?}")))
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Curve::Logistic { alpha1, alpha2, beta } => format!("logistic(a1={alpha1},a2={alpha2},b={beta})"),
            Curve::Higuchi { omega } => format!("higuchi(w={omega})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    Reference,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub reference: Curve,
    pub test: Curve,
    pub noise_var: f64,
    pub times: Vec<f64>,
    pub n_units: usize,
    pub mc_runs: usize,
    pub seed: u64,
}

/// Default sampling schedule {10, 20, ..., 60}.
pub fn default_times() -> Vec<f64> {
    (1..=6).map(|i| 10.0 * i as f64).collect()
}

/// Desk-scale number of Monte-Carlo runs.
pub const DESK_MC_RUNS: usize = 20;

impl SimScenario {
    pub fn new(name: impl Into<String>, reference: Curve, test: Curve, noise_var: f64) -> Self {
        Self {
            name: name.into(),
            reference,
            test,
            noise_var,
            times: default_times(),
            n_units: 12,
            mc_runs: DESK_MC_RUNS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reference.validate()?;
        self.test.validate()?;
        if !(self.noise_var >= 0.0) || self.n_units == 0 || self.times.is_empty() {
            return Err(Error::Config("scenario needs σ² ≥ 0, n ≥ 1 and at least one time".into()));
        }
        Ok(())
    }

    pub fn curve(&self, group: Group) -> &Curve {
        match group {
            Group::Reference => &self.reference,
            Group::Test => &self.test,
        }
    }

    /// f2 of the continuous curves over the sampling window.
    pub fn truth(&self) -> f64 {
        f2_integral_truth(&self.reference, &self.test, self.times[0], *self.times.last().unwrap())
    }

    /// Largest |f_R - f_T| over the sampling times.
    pub fn max_difference(&self) -> f64 {
        self.times
            .iter()
            .map(|&t| (self.reference.eval(t) - self.test.eval(t)).abs())
            .fold(0.0, f64::max)
    }
}

/// n unit curves: the family mean plus independent N(0, σ²) noise, unclipped.
pub fn simulate(sc: &SimScenario, group: Group, seed: u64) -> Result<DissolutionDataset> {
    sc.validate()?;
    let curve = sc.curve(group);
    let sd = sc.noise_var.sqrt();
    let mut r = rng::seeded(seed);
    let rows: Vec<Vec<f64>> = (0..sc.n_units)
        .map(|_| {
            sc.times
                .iter()
                .map(|&t| curve.eval(t) + sd * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let label = match group {
        Group::Reference => "R",
        Group::Test => "T",
    };
    DissolutionDataset::from_rows(label, sc.times.clone(), &rows)
}

/// Seed of the dataset for `group` in MC run `run`.
pub fn run_seed(master: u64, run: usize, group: Group) -> u64 {
    rng::derive_seed(master, &[run as u64, group as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub models: Vec<ModelKind>,
    pub msd: bool,
    pub crps: bool,
    pub fit: FitConfig,
    pub workers: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Lsgp],
            msd: false,
            crps: false,
            fit: FitConfig::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub model: ModelKind,
    pub f2_mean: Option<f64>,
    pub probability_similar: Option<f64>,
    pub msd_similar: Option<bool>,
    /// LOO CRPS on the test group.
    pub crps: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub runs_ok: usize,
    pub failures: usize,
    pub f2_mean: f64,
    /// Across-run variance (divisor runs - 1).
    pub f2_variance: f64,
    pub msd_similar_count: Option<usize>,
    pub crps_mean: Option<f64>,
    pub crps_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: SimScenario,
    pub truth: f64,
    pub max_difference: f64,
    pub discrete_f2_truth: f64,
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<ModelSummary>,
    pub config: StudyConfig,
}

fn run_model(
    reference: &DissolutionDataset,
    test: &DissolutionDataset,
    model: ModelKind,
    cfg: &StudyConfig,
    seed: u64,
) -> Result<(f64, f64, Option<bool>, Option<f64>)> {
    let fit_r = fit_model(reference, model, &cfg.fit, rng::derive_seed(seed, &[0]))?;
    let fit_t = fit_model(test, model, &cfg.fit, rng::derive_seed(seed, &[1]))?;
    let grid = comparison_grid(reference, cfg.fit.grid_r);
    let (fr, ft) = fitted_paths(&fit_r, &fit_t, &grid, cfg.fit.samples_m, rng::derive_seed(seed, &[2]))?;
    let f2 = f2_from_paths(&fr, &ft, SIMILARITY_THRESHOLD)?;
    let msd = if cfg.msd && model == ModelKind::Lsgp {
        let pr = fit_r.lsgp_posterior(&reference.times)?.expect("lsgp");
        let pt = fit_t.lsgp_posterior(&test.times)?.expect("lsgp");
        Some(lsgp_msd(&pr, &pt, 0.1)?.decision)
    } else {
        None
    };
    let crps = if cfg.crps {
        let loo = LooConfig {
            fit: cfg.fit.clone(),
            keep_per_unit: false,
            workers: Some(1),
        };
        Some(loo_crps(test, model, &loo, rng::derive_seed(seed, &[3]))?.mean)
    } else {
        None
    };
    Ok((f2.mean, f2.probability_similar, msd, crps))
}

/// Fresh reference and test datasets per run, every requested model fitted
/// to both, and per-model aggregates across runs.
pub fn run_mc_study(sc: &SimScenario, cfg: &StudyConfig) -> Result<StudyResult> {
    sc.validate()?;
    if sc.mc_runs == 0 {
        return Err(Error::Config("mc_runs must be at least 1".into()));
    }
    if cfg.models.is_empty() {
        return Err(Error::Config("at least one model is required".into()));
    }
    let per_run = map_indexed(sc.mc_runs, cfg.workers, |run| -> Vec<RunRecord> {
        let data = simulate(sc, Group::Reference, run_seed(sc.seed, run, Group::Reference))
            .and_then(|r| Ok((r, simulate(sc, Group::Test, run_seed(sc.seed, run, Group::Test))?)));
        cfg.models
            .iter()
            .enumerate()
            .map(|(k, &model)| {
                let outcome = data.as_ref().map_err(|e| e.to_string()).and_then(|(r, t)| {
                    run_model(r, t, model, cfg, rng::derive_seed(sc.seed, &[run as u64, 100 + k as u64]))
                        .map_err(|e| e.to_string())
                });
                match outcome {
                    Ok((f2, prob, msd, crps)) => RunRecord {
                        run,
                        model,
                        f2_mean: Some(f2),
                        probability_similar: Some(prob),
                        msd_similar: msd,
                        crps,
                        error: None,
                    },
                    Err(e) => RunRecord {
                        run,
                        model,
                        f2_mean: None,
                        probability_similar: None,
                        msd_similar: None,
                        crps: None,
                        error: Some(e),
                    },
                }
            })
            .collect()
    });
    let runs: Vec<RunRecord> = per_run.into_iter().flatten().collect();
    let summaries = cfg.models.iter().map(|&m| summarize(&runs, m)).collect();
    let discrete_f2_truth = {
        let grid = &sc.times;
        let prof = |c: &Curve| crate::data::AverageProfile {
            times: grid.clone(),
            means: grid.iter().map(|&t| c.eval(t)).collect(),
            per_time_variance: vec![0.0; grid.len()],
            per_time_cv_percent: None,
        };
        f2_discrete(&prof(&sc.reference), &prof(&sc.test), &F2Config::default())?
    };
    Ok(StudyResult {
        scenario: sc.clone(),
        truth: sc.truth(),
        max_difference: sc.max_difference(),
        discrete_f2_truth,
        runs,
        summaries,
        config: cfg.clone(),
    })
}

/// Aggregates the records of one model; the result does not depend on record order.
pub fn summarize(runs: &[RunRecord], model: ModelKind) -> ModelSummary {
    let mut mine: Vec<&RunRecord> = runs.iter().filter(|r| r.model == model).collect();
    mine.sort_by_key(|r| r.run);
    let ok: Vec<&RunRecord> = mine.iter().copied().filter(|r| r.error.is_none()).collect();
    let f2: Vec<f64> = ok.iter().filter_map(|r| r.f2_mean).collect();
    let msd: Vec<bool> = ok.iter().filter_map(|r| r.msd_similar).collect();
    let crps: Vec<f64> = ok.iter().filter_map(|r| r.crps).collect();
    ModelSummary {
        model,
        runs_ok: ok.len(),
        failures: mine.len() - ok.len(),
        f2_mean: mean(&f2),
        f2_variance: sample_variance(&f2),
        msd_similar_count: (!msd.is_empty()).then(|| msd.iter().filter(|&&d| d).count()),
        crps_mean: (!crps.is_empty()).then(|| mean(&crps)),
        crps_variance: (!crps.is_empty()).then(|| sample_variance(&crps)),
    }
}

impl StudyResult {
    /// Table-style CSV: scenario, parameters, variance, model, mean, var, plus
    /// MSD and CRPS aggregates where computed.
    pub fn write_csv<W: std::io::Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        if header {
            w.write_record([
                "scenario",
                "parameters",
                "variance",
                "model",
                "mean",
                "var",
                "truth",
                "runs_ok",
                "failures",
                "msd_similar_percent",
                "crps_mean",
                "crps_var",
            ])
            .map_err(io)?;
        }
        let params = format!("R={} T={}", self.scenario.reference.describe(), self.scenario.test.describe());
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for s in &self.summaries {
            let msd_pct = s.msd_similar_count.map(|c| 100.0 * c as f64 / s.runs_ok.max(1) as f64);
            w.write_record([
                self.scenario.name.clone(),
                params.clone(),
                self.scenario.noise_var.to_string(),
                s.model.name().to_string(),
                format!("{:.4}", s.f2_mean),
                format!("{:.4}", s.f2_variance),
                format!("{:.4}", self.truth),
                s.runs_ok.to_string(),
                s.failures.to_string(),
                opt(msd_pct),
                opt(s.crps_mean),
                opt(s.crps_variance),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Finds α1^T so the logistic pair reaches `target` f2_integral, taking the
/// root closest to `alpha1_r`.
pub fn calibrate_alpha1(alpha1_r: f64, (beta_r, alpha2_r): (f64, f64), (beta_t, alpha2_t): (f64, f64), target: f64, t1: f64, tp: f64) -> Result<f64> {
    let reference = Curve::Logistic { alpha1: alpha1_r, alpha2: alpha2_r, beta: beta_r };
    let g = |a: f64| f2_integral_truth(&reference, &Curve::Logistic { alpha1: a, alpha2: alpha2_t, beta: beta_t }, t1, tp) - target;
    let step = 0.01 * alpha1_r;
    let mut best: Option<f64> = None;
    for dir in [1.0, -1.0] {
        let mut a = alpha1_r;
        let mut ga = g(a);
        for _ in 0..400 {
            let b = a + dir * step;
            if b <= 0.0 {
                break;
            }
            let gb = g(b);
            if ga == 0.0 || ga.signum() != gb.signum() {
                let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
                let glo = g(lo);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid).signum() == glo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let root = 0.5 * (lo + hi);
                if best.is_none_or(|r| (root - alpha1_r).abs() < (r - alpha1_r).abs()) {
                    best = Some(root);
                }
                break;
            }
            a = b;
            ga = gb;
        }
    }
    best.ok_or_else(|| Error::Domain(format!("no α1^T reaches f2_integral = {target}")))
}

/// Reference asymptote used by the logistic presets.
pub const PRESET_ALPHA1_R: f64 = 80.0;

/// Logistic scenarios: (truth, (β, α2)_R, (β, α2)_T, σ²).
pub const LOGISTIC_ROWS: [(f64, (f64, f64), (f64, f64), f64); 8] = [
    (36.74, (0.14, 75.0), (0.19, 80.0), 1.0),
    (48.19, (0.19, 75.0), (0.226, 80.0), 1.0),
    (48.19, (0.19, 75.0), (0.226, 80.0), 5.0),
    (52.81, (0.19, 75.0), (0.215, 80.0), 1.0),
    (52.81, (0.19, 75.0), (0.215, 80.0), 5.0),
    (76.10, (0.19, 75.0), (0.202, 75.0), 1.0),
    (76.10, (0.19, 75.0), (0.202, 75.0), 5.0),
    (100.0, (0.19, 75.0), (0.19, 75.0), 1.0),
];

/// Higuchi scenarios: (truth, ω_R, ω_T, σ²).
pub const HIGUCHI_ROWS: [(f64, f64, f64, f64); 7] = [
    (45.0, 110.0, 70.0, 1.0),
    (49.60, 110.0, 77.0, 1.0),
    (49.60, 110.0, 77.0, 5.0),
    (51.07, 110.0, 79.0, 1.0),
    (51.07, 110.0, 79.0, 5.0),
    (67.35, 110.0, 95.0, 1.0),
    (100.0, 110.0, 110.0, 1.0),
];

/// Logistic scenario for a table row, with α1^T calibrated to the row's truth.
pub fn logistic_preset(truth: f64, r: (f64, f64), t: (f64, f64), noise_var: f64) -> Result<SimScenario> {
    let times = default_times();
    let alpha1_t = if r == t {
        PRESET_ALPHA1_R
    } else {
        calibrate_alpha1(PRESET_ALPHA1_R, r, t, truth, times[0], times[5])?
    };
    Ok(SimScenario::new(
        format!("logistic-f2={truth}-var={noise_var}"),
        Curve::Logistic { alpha1: PRESET_ALPHA1_R, alpha2: r.1, beta: r.0 },
        Curve::Logistic { alpha1: alpha1_t, alpha2: t.1, beta: t.0 },
        noise_var,
    ))
}

pub fn higuchi_preset(truth: f64, omega_r: f64, omega_t: f64, noise_var: f64) -> SimScenario {
    SimScenario::new(
        format!("higuchi-f2={truth}-var={noise_var}"),
        Curve::Higuchi { omega: omega_r },
        Curve::Higuchi { omega: omega_t },
        noise_var,
    )
}

/// Every logistic row followed by every Higuchi row.
pub fn table_presets() -> Result<Vec<SimScenario>> {
    let mut out = Vec::new();
    for (truth, r, t, v) in LOGISTIC_ROWS {
        out.push(logistic_preset(truth, r, t, v)?);
    }
    for (truth, wr, wt, v) in HIGUCHI_ROWS {
        out.push(higuchi_preset(truth, wr, wt, v));
    }
    Ok(out)
}

/// Looks up a preset by name, e.g. `logistic-f2=52.81-var=1`.
pub fn preset_by_name(name: &str) -> Result<SimScenario> {
    table_presets()?
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub p: usize,
    pub f2_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSweep {
    pub truth: f64,
    pub points: Vec<BiasPoint>,
}

/// Discrete f2 on p equally spaced points of [t1, tp], for each p.
pub fn bias_sweep(reference: &Curve, test: &Curve, p_values: &[usize], t1: f64, tp: f64) -> Result<BiasSweep> {
    if !(tp > t1) {
        return Err(Error::Domain("bias sweep needs t1 < tp".into()));
    }
    let mut points = Vec::with_capacity(p_values.len());
    for &p in p_values {
        if p < 2 {
            return Err(Error::Domain(format!("bias sweep needs p ≥ 2, got {p}")));
        }
        let times = linspace(t1, tp, p);
        let prof = |c: &Curve| crate::data::AverageProfile {
            times: times.clone(),
            means: times.iter().map(|&t| c.eval(t)).collect(),
            per_time_variance: vec![0.0; p],
            per_time_cv_percent: None,
        };
        points.push(BiasPoint {
            p,
            f2_metric: f2_discrete(&prof(reference), &prof(test), &F2Config::default())?,
        });
    }
    Ok(BiasSweep {
        truth: f2_integral_truth(reference, test, t1, tp),
        points,
    })
}

/// The two curve pairs behind the bias figure (left, right).
pub fn bias_figure_curves() -> [(Curve, Curve); 2] {
    [
        (
            Curve::Logistic { alpha1: 70.91, alpha2: 100.0, beta: 0.403 },
            Curve::Logistic { alpha1: 70.69, alpha2: 99.98, beta: 0.292 },
        ),
        (
            Curve::Logistic { alpha1: 60.55, alpha2: 90.0, beta: 0.228 },
            Curve::Logistic { alpha1: 75.0, alpha2: 100.0, beta: 0.19 },
        ),
    ]
}

/// Discrete f2 of a pair of simulated datasets, as a quick sanity number.
pub fn observed_f2(reference: &DissolutionDataset, test: &DissolutionDataset) -> Result<f64> {
    f2_discrete(&average_profile(reference), &average_profile(test), &F2Config::default())
}
