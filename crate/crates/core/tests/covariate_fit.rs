use dissolve_gp::DissolutionDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use dissolve_gp::covariate::{
    covariate_logistic, extrapolate_experiment, in_sample_rmse, joint_fit, joint_log_posterior, simulate_study, CovariateDesign,
    CovariateParams, CovariatePriors, JointFitConfig,
};

fn truth(n_exp: usize, noise: (f64, f64)) -> CovariateParams {
    CovariateParams {
        beta: vec![80f64.ln(), 0.10, -0.05, 0.08, 0.05],
        gamma: vec![20f64.ln(), -0.20, 0.15, 0.10, 0.0],
        delta: vec![0.1f64.ln(), 0.10, 0.20, -0.15, 0.0],
        tau2: 1e-4,
        noise: vec![noise; n_exp],
    }
}

fn times() -> Vec<f64> {
    (1..=10).map(|i| 6.0 * i as f64).collect()
}

#[test]
fn recovers_non_intercept_coefficients() {
    let design = CovariateDesign::standard_design();
    let tr = truth(design.len(), (0.0, 0.0));
    let data = simulate_study(&design, &tr, &times(), 3, 11).unwrap();
    let fit = joint_fit(&data, &CovariatePriors::default(), &JointFitConfig::default()).unwrap();
    let p = &fit.params;
    for (est, tru) in [(&p.beta, &tr.beta), (&p.gamma, &tr.gamma), (&p.delta, &tr.delta)] {
        for k in 1..est.len() {
            assert!((est[k] - tru[k]).abs() < 0.2, "{est:?} vs {tru:?}");
        }
    }
}

fn rmse_vs_truth(pred: &[f64], tr: &CovariateParams, x: &[f64], times: &[f64]) -> f64 {
    let ss: f64 = times
        .iter()
        .zip(pred)
        .map(|(&t, p)| (p - covariate_logistic(t, x, tr).unwrap()).powi(2))
        .sum();
    (ss / times.len() as f64).sqrt()
}

#[test]
fn held_out_experiments_extrapolate() {
    let design = CovariateDesign::standard_design();
    let tr = truth(design.len(), (0.0, 0.0));
    let t = times();
    for seed in [23, 24] {
        let data = simulate_study(&design, &tr, &t, 3, seed).unwrap();
        let held = [0usize, 4, 9];
        let train: Vec<_> =
            data.iter().enumerate().filter(|(i, _)| !held.contains(i)).map(|(_, d)| d.clone()).collect();
        let fit = joint_fit(&train, &CovariatePriors::default(), &JointFitConfig::default()).unwrap();
        let in_sample = in_sample_rmse(&fit.params, &train).unwrap();
        for &h in &held {
            let x = &design.x[h];
            let post = extrapolate_experiment(&fit.params, x, &t).unwrap();
            let out = rmse_vs_truth(post.mean.as_slice(), &tr, x, &t);
            assert!(out < 2.0 * in_sample, "seed {seed} experiment {h}: {out} vs {in_sample}");
        }
    }
}

#[test]
fn noise_slopes_take_either_sign() {
    let design = CovariateDesign::standard_design();
    let mut tr = truth(design.len(), (0.0, 0.0));
    // even experiments get noisier over time, odd ones calmer
    for (e, n) in tr.noise.iter_mut().enumerate() {
        *n = if e % 2 == 0 { (-1.0, 0.04) } else { (1.5, -0.04) };
    }
    let data = simulate_study(&design, &tr, &times(), 6, 5).unwrap();
    let fit = joint_fit(&data, &CovariatePriors::default(), &JointFitConfig::default()).unwrap();
    let agree = fit.params.noise.iter().zip(&tr.noise).filter(|(f, t)| f.1.signum() == t.1.signum()).count();
    assert!(agree >= 10, "{:?}", fit.params.noise);
    assert!(fit.params.noise.iter().any(|n| n.1 > 0.0) && fit.params.noise.iter().any(|n| n.1 < 0.0));
}

#[test]
fn design_reuse_gives_fitted_curve() {
    let design = CovariateDesign::standard_design();
    let tr = truth(design.len(), (0.0, 0.0));
    let data = simulate_study(&design, &tr, &times(), 3, 2).unwrap();
    let fit = joint_fit(&data, &CovariatePriors::default(), &JointFitConfig::default()).unwrap();
    let grid = [0.0, 7.5, 30.0, 59.0];
    let post = extrapolate_experiment(&fit.params, &design.x[6], &grid).unwrap();
    for (i, &t) in grid.iter().enumerate() {
        assert!((post.mean[i] - covariate_logistic(t, &design.x[6], &fit.params).unwrap()).abs() < 1e-12);
    }
    // PB (experiment 1) and HCl (experiment 7) share the other covariates
    let pb = covariate_logistic(1e4, &design.x[0], &fit.params).unwrap();
    let hcl = covariate_logistic(1e4, &design.x[6], &fit.params).unwrap();
    assert!((hcl / pb - fit.params.beta[1].exp()).abs() < 1e-9);
}

#[test]
fn constant_covariate_collapses_to_shared_logistic() {
    let t = times();
    let shared = CovariateParams::base(80.0, 20.0, 0.1, 1);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<_> = (0..5)
        .map(|e| {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    t.iter()
                        .map(|&tt| covariate_logistic(tt, &[0.0], &shared).unwrap() + r.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            (DissolutionDataset::from_rows(e.to_string(), t.clone(), &rows).unwrap(), vec![0.0])
        })
        .collect();
    let fit = joint_fit(&data, &CovariatePriors::default(), &JointFitConfig::default()).unwrap();
    // the slope has no likelihood information and stays at its prior mean
    for c in [&fit.params.beta, &fit.params.gamma, &fit.params.delta] {
        assert!(c[1].abs() < 1e-3, "{c:?}");
    }
    assert!((fit.params.beta[0] - 80f64.ln()).abs() < 0.02);
    assert!((fit.params.delta[0] - 0.1f64.ln()).abs() < 0.1);
}

#[test]
fn fit_is_a_local_optimum() {
    let design = CovariateDesign::standard_design();
    let tr = truth(design.len(), (0.0, 0.0));
    let data = simulate_study(&design, &tr, &times(), 3, 3).unwrap();
    let priors = CovariatePriors::default();
    let fit = joint_fit(&data, &priors, &JointFitConfig::default()).unwrap();
    let at = joint_log_posterior(&data, &fit.params, &priors).unwrap();
    assert!((at - fit.log_posterior).abs() < 1e-6);
    for block in 0..3 {
        for k in 0..5 {
            for step in [-1e-3, 1e-3] {
                let mut p = fit.params.clone();
                match block {
                    0 => p.beta[k] += step,
                    1 => p.gamma[k] += step,
                    _ => p.delta[k] += step,
                }
                let v = joint_log_posterior(&data, &p, &priors).unwrap();
                assert!(v <= at + 1e-6, "block {block} coef {k}: {v} > {at}");
            }
        }
    }
}
