//! Model-level workflow: fit LSGP or CTGP to a group, draw posterior paths,
//! and assemble comparison reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ctgp::{ctgp_fit, ctgp_sample_f, CtgpChain, CtgpConfig};
use crate::data::DissolutionDataset;
use crate::error::{Error, Result};
use crate::estimation::{map_fit_with, MapConfig, MapResult, PriorSpec};
use crate::gp::{fit_posterior_with_order, linspace, GpPosterior, DEFAULT_GRID_R};
use crate::kernels::{CtgpHyperparams, SplineOrder};
use crate::rng;
use crate::similarity::{
    delta_from_paths, f2_from_paths, lsgp_msd, tsong_msd, F2Config, F2Posterior, TestSummary,
};
use crate::stats::sample_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lsgp,
    Ctgp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lsgp => "lsgp",
            ModelKind::Ctgp => "ctgp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsgp" => Ok(Self::Lsgp),
            "ctgp" => Ok(Self::Ctgp),
            other => Err(Error::Config(format!("unknown model '{other}' (expected lsgp or ctgp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    F2,
    Delta,
    MsdTsong,
    MsdLsgp,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::F2, TestKind::Delta, TestKind::MsdTsong, TestKind::MsdLsgp];
}

impl std::str::FromStr for TestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f2" => Ok(Self::F2),
            "delta" => Ok(Self::Delta),
            "msd-tsong" => Ok(Self::MsdTsong),
            "msd-lsgp" => Ok(Self::MsdLsgp),
            other => Err(Error::Config(format!(
                "unknown test '{other}' (expected f2, delta, msd-tsong or msd-lsgp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub map: MapConfig,
    pub ctgp: CtgpConfig,
    pub ctgp_prior: CtgpHyperparams,
    pub grid_r: usize,
    pub samples_m: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            ctgp: CtgpConfig::default(),
            ctgp_prior: CtgpHyperparams::default(),
            grid_r: DEFAULT_GRID_R,
            samples_m: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Lsgp {
        data: DissolutionDataset,
        map: MapResult,
        order: SplineOrder,
    },
    Ctgp { chain: Box<CtgpChain> },
}

/// Fits one group. LSGP uses empirical-Bayes priors and MAP; CTGP runs the
/// Gibbs sampler.
pub fn fit_model(ds: &DissolutionDataset, kind: ModelKind, cfg: &FitConfig, seed: u64) -> Result<FittedModel> {
    match kind {
        ModelKind::Lsgp => {
            let spec = PriorSpec::from_dataset(ds)?;
            let map = map_fit_with(ds, &spec, &MapConfig { seed, ..cfg.map })?;
            Ok(FittedModel::Lsgp {
                data: ds.clone(),
                map,
                order: cfg.map.order,
            })
        }
        ModelKind::Ctgp => {
            let chain = ctgp_fit(ds, &cfg.ctgp_prior, &cfg.ctgp, seed)?;
            Ok(FittedModel::Ctgp { chain: Box::new(chain) })
        }
    }
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Lsgp { .. } => ModelKind::Lsgp,
            FittedModel::Ctgp { .. } => ModelKind::Ctgp,
        }
    }

    /// LSGP posterior on `grid`; `None` for CTGP.
    pub fn lsgp_posterior(&self, grid: &[f64]) -> Result<Option<GpPosterior>> {
        match self {
            FittedModel::Lsgp { data, map, order } => {
                Ok(Some(fit_posterior_with_order(data, &map.hyperparams, grid, *order)?))
            }
            FittedModel::Ctgp { .. } => Ok(None),
        }
    }

    /// `m` posterior draws of f on `grid` (rows are draws).
    pub fn draw_paths(&self, grid: &[f64], m: usize, seed: u64) -> Result<DMatrix<f64>> {
        match self {
            FittedModel::Lsgp { .. } => {
                let post = self.lsgp_posterior(grid)?.expect("LSGP posterior");
                crate::gp::sample_posterior_rng(&post, m, &mut rng::seeded(seed), false)
            }
            FittedModel::Ctgp { chain } => {
                let p = chain.times.len();
                let full = ctgp_sample_f(chain, grid, Some(m), seed)?;
                let mut paths = full.columns(p, grid.len()).into_owned();
                // fewer retained iterations than m: recycle rows deterministically
                if paths.nrows() < m {
                    let k = paths.nrows();
                    paths = DMatrix::from_fn(m, grid.len(), |i, j| paths[(i % k, j)]);
                }
                Ok(paths)
            }
        }
    }
}

/// Pointwise mean and central 95% band from path draws.
pub fn path_summary(paths: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut mean = Vec::with_capacity(paths.ncols());
    let mut lower = Vec::with_capacity(paths.ncols());
    let mut upper = Vec::with_capacity(paths.ncols());
    for col in paths.column_iter() {
        let v: Vec<f64> = col.iter().copied().collect();
        mean.push(v.iter().sum::<f64>() / v.len() as f64);
        lower.push(sample_quantile(&v, 0.025));
        upper.push(sample_quantile(&v, 0.975));
    }
    (mean, lower, upper)
}

/// A plot-ready series: t, mean, lower95, upper95.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
}

impl CurveSeries {
    pub fn from_posterior(post: &GpPosterior) -> Self {
        let (lo, hi) = post.band95();
        Self {
            t: post.grid.clone(),
            mean: post.mean.iter().copied().collect(),
            lower95: lo.iter().copied().collect(),
            upper95: hi.iter().copied().collect(),
        }
    }

    pub fn from_paths(grid: &[f64], paths: &DMatrix<f64>) -> Self {
        let (mean, lower95, upper95) = path_summary(paths);
        Self {
            t: grid.to_vec(),
            mean,
            lower95,
            upper95,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean", "lower95", "upper95"]).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for i in 0..self.t.len() {
            w.write_record([
                self.t[i].to_string(),
                self.mean[i].to_string(),
                self.lower95[i].to_string(),
                self.upper95[i].to_string(),
            ])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush().map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

/// The f2 grid: r points on [t_1, t_p] of the reference times.
pub fn comparison_grid(reference: &DissolutionDataset, r: usize) -> Vec<f64> {
    linspace(reference.times[0], *reference.times.last().expect("nonempty times"), r)
}

fn check_pair(reference: &DissolutionDataset, test: &DissolutionDataset) -> Result<()> {
    if !reference.same_grid(test) {
        return Err(Error::Structure("reference and test must share sampling times".into()));
    }
    Ok(())
}

/// Paired path draws for the f2 and δ statistics from already fitted models.
pub fn fitted_paths(
    reference: &FittedModel,
    test: &FittedModel,
    grid: &[f64],
    m: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let fr = reference.draw_paths(grid, m, rng::derive_seed(seed, &[0]))?;
    let ft = test.draw_paths(grid, m, rng::derive_seed(seed, &[1]))?;
    Ok((fr, ft))
}

/// Posterior f2 for a pair of groups under one model.
pub fn model_f2(
    reference: &DissolutionDataset,
    test: &DissolutionDataset,
    kind: ModelKind,
    cfg: &FitConfig,
    seed: u64,
) -> Result<F2Posterior> {
    check_pair(reference, test)?;
    let fit_r = fit_model(reference, kind, cfg, rng::derive_seed(seed, &[10]))?;
    let fit_t = fit_model(test, kind, cfg, rng::derive_seed(seed, &[11]))?;
    let grid = comparison_grid(reference, cfg.grid_r);
    let (fr, ft) = fitted_paths(&fit_r, &fit_t, &grid, cfg.samples_m, seed)?;
    f2_from_paths(&fr, &ft, crate::similarity::SIMILARITY_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model: ModelKind,
    pub reference_label: String,
    pub test_label: String,
    pub discrete_f2: f64,
    pub tests: Vec<TestSummary>,
    pub config: serde_json::Value,
}

/// Fits both groups and runs the requested tests.
pub fn compare_groups(
    reference: &DissolutionDataset,
    test: &DissolutionDataset,
    kind: ModelKind,
    tests: &[TestKind],
    cfg: &FitConfig,
    seed: u64,
) -> Result<ComparisonReport> {
    check_pair(reference, test)?;
    let discrete_f2 = crate::similarity::f2_discrete(
        &crate::data::average_profile(reference),
        &crate::data::average_profile(test),
        &F2Config::default(),
    )?;
    let fit_r = fit_model(reference, kind, cfg, rng::derive_seed(seed, &[10]))?;
    let fit_t = fit_model(test, kind, cfg, rng::derive_seed(seed, &[11]))?;
    let grid = comparison_grid(reference, cfg.grid_r);
    let needs_paths = tests.iter().any(|t| matches!(t, TestKind::F2 | TestKind::Delta));
    let paths = if needs_paths {
        Some(fitted_paths(&fit_r, &fit_t, &grid, cfg.samples_m, seed)?)
    } else {
        None
    };
    let f2_cfg = F2Config {
        grid_r: cfg.grid_r,
        samples_m: cfg.samples_m,
        ..F2Config::default()
    };
    let mut out = Vec::new();
    for t in tests {
        match t {
            TestKind::F2 => {
                let (fr, ft) = paths.as_ref().expect("paths drawn");
                let f2 = f2_from_paths(fr, ft, f2_cfg.threshold)?;
                out.push(TestSummary::from_f2("f2", &f2, &f2_cfg));
            }
            TestKind::Delta => {
                let (fr, ft) = paths.as_ref().expect("paths drawn");
                out.push(TestSummary::from_delta("delta", &delta_from_paths(fr, ft)?));
            }
            TestKind::MsdTsong => {
                out.push(TestSummary::from_msd(&tsong_msd(reference, test, 0.1)?, 0.9));
            }
            TestKind::MsdLsgp => {
                let (pr, pt) = match (fit_r.lsgp_posterior(&reference.times)?, fit_t.lsgp_posterior(&test.times)?) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::Config("msd-lsgp needs the lsgp model".into()));
                    }
                };
                out.push(TestSummary::from_msd(&lsgp_msd(&pr, &pt, 0.1)?, 0.9));
            }
        }
    }
    Ok(ComparisonReport {
        model: kind,
        reference_label: reference.group_label.clone(),
        test_label: test.group_label.clone(),
        discrete_f2,
        tests: out,
        config: serde_json::json!({
            "model": kind.name(),
            "tests": tests,
            "grid_r": cfg.grid_r,
            "samples_m": cfg.samples_m,
            "seed": seed,
            "map": cfg.map,
            "ctgp": cfg.ctgp,
            "ctgp_prior": cfg.ctgp_prior,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn quick() -> FitConfig {
        FitConfig {
            grid_r: 100,
            samples_m: 200,
            map: MapConfig { restarts: 3, ..MapConfig::default() },
            ctgp: CtgpConfig { iters: 400, burn_in: 100, ..CtgpConfig::default() },
            ..FitConfig::default()
        }
    }

    #[test]
    fn self_comparison_is_similar() {
        let (r, _) = fixtures::dataset2();
        let rep = compare_groups(&r, &r, ModelKind::Lsgp, &TestKind::ALL, &quick(), 3).unwrap();
        assert_eq!(rep.discrete_f2, 100.0);
        let f2 = &rep.tests[0];
        assert_eq!(f2.method, "f2");
        assert!(f2.probability.unwrap() > 0.999);
        assert!(rep.tests[1].probability.unwrap() > 0.999);
        assert!(rep.tests.iter().all(|t| t.decision));
    }

    #[test]
    fn report_echoes_config_and_round_trips() {
        let (r, t) = fixtures::dataset1();
        let rep = compare_groups(&r, &t, ModelKind::Lsgp, &[TestKind::F2], &quick(), 8).unwrap();
        assert_eq!(rep.config["seed"], 8);
        assert_eq!(rep.config["grid_r"], 100);
        let json = serde_json::to_string(&rep).unwrap();
        let back: ComparisonReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tests.len(), 1);
        let again = compare_groups(&r, &t, ModelKind::Lsgp, &[TestKind::F2], &quick(), 8).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), json);
    }

    #[test]
    fn ctgp_paths_and_msd_guard() {
        let (r, t) = fixtures::dataset2();
        let cfg = quick();
        let fit = fit_model(&r, ModelKind::Ctgp, &cfg, 1).unwrap();
        let grid = comparison_grid(&r, 50);
        let paths = fit.draw_paths(&grid, 500, 2).unwrap();
        assert_eq!(paths.shape(), (500, 50));
        assert!(matches!(
            compare_groups(&r, &t, ModelKind::Ctgp, &[TestKind::MsdLsgp], &cfg, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn series_bands_are_ordered() {
        let (r, _) = fixtures::dataset1();
        let fit = fit_model(&r, ModelKind::Lsgp, &quick(), 0).unwrap();
        let grid = comparison_grid(&r, 60);
        let s = CurveSeries::from_posterior(&fit.lsgp_posterior(&grid).unwrap().unwrap());
        for i in 0..s.t.len() {
            assert!(s.lower95[i] <= s.mean[i] && s.mean[i] <= s.upper95[i]);
        }
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,mean,lower95,upper95\n"));
    }
}
