use std::collections::HashMap;

use dissolve_gp::compare::{comparison_grid, compare_groups, fit_model, CurveSeries, FitConfig, FittedModel, ModelKind, TestKind};
use dissolve_gp::covariate::{
    extrapolate_experiment, in_sample_rmse, joint_fit, simulate_study, synthetic_truth, CovariateDesign, CovariateFit,
    CovariatePriors, ExperimentCovariates, JointFitConfig,
};
use dissolve_gp::data::{check_validity, parse_groups, write_long_csv, CsvFormat};
use dissolve_gp::gp::linspace;
use dissolve_gp::rng::derive_seed;
use dissolve_gp::scoring::{loo_crps, LooConfig};
use dissolve_gp::simulation::{
    bias_figure_curves, bias_sweep, preset_by_name, run_mc_study, run_seed, simulate, table_presets, Curve, Group,
    StudyConfig,
};
use dissolve_gp::{DissolutionDataset, Error};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{Cli, Command, Common, Figure, Format, Model, TestArg};
use crate::io::{load_pair, load_single, open_input, read_to_string, write_csv, write_json};
use crate::CliError;

pub const SEED_ENV: &str = "DISSOLVE_GP_SEED";

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(rand::random()),
    }
}

fn model_kind(m: Model) -> ModelKind {
    match m {
        Model::Lsgp => ModelKind::Lsgp,
        Model::Ctgp => ModelKind::Ctgp,
    }
}

fn fit_config(common: &Common, sample_lengthscales: bool) -> Result<FitConfig, CliError> {
    if common.grid_r < 2 || common.samples_m < 1 {
        return Err(CliError::Usage("--grid-r must be at least 2 and --samples-m at least 1".into()));
    }
    let mut cfg = FitConfig {
        grid_r: common.grid_r,
        samples_m: common.samples_m,
        ..FitConfig::default()
    };
    cfg.ctgp.sample_lengthscales = sample_lengthscales;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut common = cli.common;
    let seed = resolve_seed(common.seed)?;
    common.seed = Some(seed);
    if common.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    log::info!("{} with seed {seed}", cli.command.name());
    let mut config = serde_json::to_value(&cli.command).expect("arguments serialize");
    let common_value = serde_json::to_value(&common).expect("arguments serialize");
    if let (Value::Object(cmd), Value::Object(shared)) = (&mut config, common_value) {
        cmd.extend(shared);
    }
    match &cli.command {
        Command::Simulate { scenario, run } => cmd_simulate(&common, &config, scenario, *run, seed),
        Command::Fit { inputs, model, sample_lengthscales } => {
            let ds = load_single(inputs)?;
            cmd_fit(&common, &config, &ds, *model, fit_config(&common, *sample_lengthscales)?, seed)
        }
        Command::Compare { inputs, model, tests, sample_lengthscales } => {
            let (r, t) = load_pair(inputs)?;
            let cfg = fit_config(&common, *sample_lengthscales)?;
            cmd_compare(&common, &config, &r, &t, *model, tests, &cfg, seed)
        }
        Command::Validity { inputs } => {
            let (r, t) = load_pair(inputs)?;
            let rep = check_validity(&r, &t);
            match common.format {
                Format::Json => write_json(&common, &config, &rep),
                Format::Csv => write_csv(&common, &config, |w| {
                    writeln!(w, "criterion,passed,note")?;
                    for c in &rep.criteria {
                        writeln!(w, "{},{},\"{}\"", c.name, c.passed, c.note.replace('"', "'"))?;
                    }
                    Ok(())
                }),
            }
        }
        Command::CrpsLoo { inputs, model } => {
            let ds = load_single(inputs)?;
            let cfg = LooConfig {
                fit: fit_config(&common, false)?,
                keep_per_unit: true,
                workers: common.workers,
            };
            let rep = loo_crps(&ds, model_kind(*model), &cfg, seed)?;
            match common.format {
                Format::Json => write_json(&common, &config, &rep),
                Format::Csv => write_csv(&common, &config, |w| {
                    writeln!(w, "t,crps")?;
                    for (t, v) in rep.times.iter().zip(&rep.per_time) {
                        writeln!(w, "{t},{}", v.map(|x| x.to_string()).unwrap_or_default())?;
                    }
                    writeln!(w, "mean,{}", rep.mean)?;
                    Ok(())
                }),
            }
        }
        Command::McStudy { scenario, mc_runs, model, msd, crps } => {
            cmd_mc_study(&common, &config, scenario, *mc_runs, model, *msd, *crps, seed)
        }
        Command::BiasSweep { figure, reference_curve, test_curve, p_min, p_max, t1, tp } => {
            let (r, t) = match (reference_curve, test_curve) {
                (Some(r), Some(t)) => (logistic_curve(r)?, logistic_curve(t)?),
                _ => {
                    let [left, right] = bias_figure_curves();
                    if *figure == Figure::Left { left } else { right }
                }
            };
            if p_min > p_max {
                return Err(CliError::Usage("--p-min must not exceed --p-max".into()));
            }
            let ps: Vec<usize> = (*p_min..=*p_max).collect();
            let sweep = bias_sweep(&r, &t, &ps, *t1, *tp)?;
            match common.format {
                Format::Json => write_json(&common, &config, &sweep),
                Format::Csv => write_csv(&common, &config, |w| {
                    writeln!(w, "p,f2_metric,truth")?;
                    for pt in &sweep.points {
                        writeln!(w, "{},{},{}", pt.p, pt.f2_metric, sweep.truth)?;
                    }
                    Ok(())
                }),
            }
        }
        Command::CovariateFit { design, input, synthetic, units, restarts } => {
            cmd_covariate_fit(&common, &config, design.as_deref(), input.as_deref(), *synthetic, *units, *restarts, seed)
        }
        Command::CovariatePredict { fit, medium, rpm, viscosity, vea, t_max } => {
            let saved: SavedCovariateFit = serde_json::from_str(&read_to_string(fit)?)
                .map_err(|e| CliError::Core(Error::Parse { line: e.line(), message: format!("{fit}: {e}") }))?;
            let row = ExperimentCovariates {
                id: "new".into(),
                substance: String::new(),
                apparatus: String::new(),
                medium: medium.clone(),
                rpm: *rpm,
                viscosity: *viscosity,
                vea: vea.clone(),
            };
            if !(*t_max > 0.0) {
                return Err(CliError::Usage("--t-max must be positive".into()));
            }
            let x = saved.design.encode(&row)?;
            let grid = linspace(0.0, *t_max, common.grid_r.max(2));
            let series = CurveSeries::from_posterior(&extrapolate_experiment(&saved.fit.params, &x, &grid)?);
            emit_series(&common, &config, &series, json!({ "covariates": x }))
        }
    }
}

fn logistic_curve(v: &[f64]) -> Result<Curve, CliError> {
    let c = Curve::Logistic { alpha1: v[0], alpha2: v[1], beta: v[2] };
    c.validate()?;
    Ok(c)
}

fn emit_series(common: &Common, config: &Value, series: &CurveSeries, extra: Value) -> Result<(), CliError> {
    match common.format {
        Format::Json => {
            let mut body = extra;
            body["series"] = serde_json::to_value(series).expect("series serializes");
            write_json(common, config, &body)
        }
        Format::Csv => write_csv(common, config, |w| series.write_csv(w)),
    }
}

fn cmd_simulate(common: &Common, config: &Value, name: &str, run: usize, seed: u64) -> Result<(), CliError> {
    let mut sc = preset_by_name(name).map_err(|_| unknown_scenario(name))?;
    sc.seed = seed;
    let reference = simulate(&sc, Group::Reference, run_seed(seed, run, Group::Reference))?;
    let test = simulate(&sc, Group::Test, run_seed(seed, run, Group::Test))?;
    match common.format {
        Format::Csv => write_csv(common, config, |w| write_long_csv(w, &[&reference, &test])),
        Format::Json => write_json(
            common,
            config,
            &json!({ "scenario": sc, "truth": sc.truth(), "reference": reference, "test": test }),
        ),
    }
}

fn unknown_scenario(name: &str) -> CliError {
    let names: Vec<String> = table_presets().map(|v| v.into_iter().map(|s| s.name).collect()).unwrap_or_default();
    CliError::Usage(format!("unknown scenario '{name}'; available: {}", names.join(", ")))
}

#[derive(Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum FitSummary {
    Lsgp {
        hyperparams: dissolve_gp::LsgpHyperparams,
        log_joint: f64,
        converged: bool,
        restart_index: usize,
    },
    Ctgp {
        iterations: usize,
        retained: usize,
        posterior_mean: HashMap<&'static str, f64>,
        acceptance_rate: Option<f64>,
        warnings: Vec<String>,
    },
}

fn cmd_fit(common: &Common, config: &Value, ds: &DissolutionDataset, model: Model, cfg: FitConfig, seed: u64) -> Result<(), CliError> {
    let fitted = fit_model(ds, model_kind(model), &cfg, derive_seed(seed, &[10]))?;
    let grid = comparison_grid(ds, cfg.grid_r);
    let (summary, series) = match &fitted {
        FittedModel::Lsgp { map, .. } => {
            let post = fitted.lsgp_posterior(&grid)?.expect("lsgp posterior");
            (
                FitSummary::Lsgp {
                    hyperparams: map.hyperparams,
                    log_joint: map.log_joint,
                    converged: map.converged,
                    restart_index: map.restart_index,
                },
                CurveSeries::from_posterior(&post),
            )
        }
        FittedModel::Ctgp { chain } => {
            let kept = chain.retained();
            let mean = |v: &[f64]| kept.iter().map(|&i| v[i]).sum::<f64>() / kept.len().max(1) as f64;
            let posterior_mean = HashMap::from([
                ("sigma2", mean(&chain.sigma2)),
                ("tau2", mean(&chain.tau2)),
                ("phi", mean(&chain.phi)),
                ("psi", mean(&chain.psi)),
            ]);
            let paths = fitted.draw_paths(&grid, cfg.samples_m, derive_seed(seed, &[0]))?;
            (
                FitSummary::Ctgp {
                    iterations: chain.len(),
                    retained: kept.len(),
                    posterior_mean,
                    acceptance_rate: chain.acceptance_rate,
                    warnings: chain.warnings.clone(),
                },
                CurveSeries::from_paths(&grid, &paths),
            )
        }
    };
    emit_series(
        common,
        config,
        &series,
        json!({ "group": ds.group_label, "fit": summary }),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    common: &Common,
    config: &Value,
    r: &DissolutionDataset,
    t: &DissolutionDataset,
    model: Model,
    tests: &[TestArg],
    cfg: &FitConfig,
    seed: u64,
) -> Result<(), CliError> {
    let kind = model_kind(model);
    let tests: Vec<TestKind> = if tests.is_empty() {
        TestKind::ALL
            .into_iter()
            .filter(|t| kind == ModelKind::Lsgp || *t != TestKind::MsdLsgp)
            .collect()
    } else {
        tests
            .iter()
            .map(|t| match t {
                TestArg::F2 => TestKind::F2,
                TestArg::Delta => TestKind::Delta,
                TestArg::MsdTsong => TestKind::MsdTsong,
                TestArg::MsdLsgp => TestKind::MsdLsgp,
            })
            .collect()
    };
    let rep = compare_groups(r, t, kind, &tests, cfg, seed)?;
    match common.format {
        Format::Json => write_json(common, config, &json!({ "report": rep })),
        Format::Csv => write_csv(common, config, |w| {
            writeln!(w, "method,point_estimate,lower,upper,probability,decision")?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "discrete-f2,{},,,,{}", rep.discrete_f2, rep.discrete_f2 >= 50.0)?;
            for s in &rep.tests {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    s.method,
                    s.point_estimate,
                    opt(s.interval.map(|i| i.0)),
                    opt(s.interval.map(|i| i.1)),
                    opt(s.probability),
                    s.decision
                )?;
            }
            Ok(())
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_mc_study(
    common: &Common,
    config: &Value,
    names: &[String],
    mc_runs: Option<usize>,
    models: &[Model],
    msd: bool,
    crps: bool,
    seed: u64,
) -> Result<(), CliError> {
    let scenarios = if names.iter().any(|n| n == "all") {
        table_presets()?
    } else {
        names
            .iter()
            .map(|n| preset_by_name(n).map_err(|_| unknown_scenario(n)))
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut models: Vec<ModelKind> = models.iter().map(|m| model_kind(*m)).collect();
    models.dedup();
    let cfg = StudyConfig {
        models,
        msd,
        crps,
        fit: fit_config(common, false)?,
        workers: common.workers,
    };
    let mut results = Vec::with_capacity(scenarios.len());
    for mut sc in scenarios {
        sc.seed = seed;
        if let Some(r) = mc_runs {
            if r == 0 {
                return Err(CliError::Usage("--mc-runs must be at least 1".into()));
            }
            sc.mc_runs = r;
        }
        log::info!("scenario {}", sc.name);
        results.push(run_mc_study(&sc, &cfg)?);
    }
    match common.format {
        Format::Json => write_json(common, config, &json!({ "studies": results })),
        Format::Csv => write_csv(common, config, |w| {
            for (i, r) in results.iter().enumerate() {
                r.write_csv(&mut *w, i == 0)?;
            }
            Ok(())
        }),
    }
}

#[derive(Serialize, Deserialize)]
struct SavedCovariateFit {
    design: CovariateDesign,
    fit: CovariateFit,
}

#[allow(clippy::too_many_arguments)]
fn cmd_covariate_fit(
    common: &Common,
    config: &Value,
    design_path: Option<&str>,
    input: Option<&str>,
    synthetic: bool,
    units: usize,
    restarts: usize,
    seed: u64,
) -> Result<(), CliError> {
    let design = match design_path {
        Some(p) => CovariateDesign::from_csv(open_input(p)?)?,
        None => CovariateDesign::standard_design(),
    };
    let experiments = match (input, synthetic) {
        (_, true) => {
            if units < 2 {
                return Err(CliError::Usage("--units must be at least 2".into()));
            }
            let times: Vec<f64> = (1..=10).map(|i| 6.0 * i as f64).collect();
            simulate_study(&design, &synthetic_truth(design.len()), &times, units, derive_seed(seed, &[1]))?
        }
        (Some(path), false) => {
            let groups = parse_groups(open_input(path)?, &CsvFormat::Long)?;
            design
                .experiments
                .iter()
                .zip(&design.x)
                .map(|(e, x)| {
                    groups
                        .iter()
                        .find(|g| g.group_label == e.id)
                        .map(|g| (g.clone(), x.clone()))
                        .ok_or_else(|| CliError::Core(Error::Structure(format!("no data for experiment '{}'", e.id))))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        (None, false) => return Err(CliError::Usage("give --input or --synthetic".into())),
    };
    let fit = joint_fit(
        &experiments,
        &CovariatePriors::default(),
        &JointFitConfig { restarts, seed, ..JointFitConfig::default() },
    )?;
    let rmse = in_sample_rmse(&fit.params, &experiments)?;
    match common.format {
        Format::Json => write_json(
            common,
            config,
            &json!({ "design": design, "fit": fit, "in_sample_rmse": rmse }),
        ),
        Format::Csv => write_csv(common, config, |w| {
            writeln!(w, "parameter,value")?;
            let names = ["intercept", "medium", "rpm", "ln_viscosity", "vea"];
            let p = &fit.params;
            for (block, coef) in [("beta", &p.beta), ("gamma", &p.gamma), ("delta", &p.delta)] {
                for (k, v) in coef.iter().enumerate() {
                    writeln!(w, "{block}_{},{v}", names.get(k).copied().unwrap_or("x"))?;
                }
            }
            writeln!(w, "tau2,{}", p.tau2)?;
            for (id, (a, b)) in fit.experiment_ids.iter().zip(&p.noise) {
                writeln!(w, "a_{id},{a}")?;
                writeln!(w, "b_{id},{b}")?;
            }
            writeln!(w, "in_sample_rmse,{rmse}")?;
            Ok(())
        }),
    }
}
