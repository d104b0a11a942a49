//! Continuous-time GP baseline.
//!
//! Units are modelled as y_j = f + ε_j with ε_j ~ GP(0, σ² K_φ) (Matérn 3/2)
//! and f ~ GP(0, τ² H_ψ) (squared exponential). σ² and τ² get inverse-gamma
//! priors and are updated by Gibbs; φ and ψ are either fixed or moved by a
//! log-scale random-walk Metropolis step.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DissolutionDataset;
use crate::error::{Error, Result};
use crate::kernels::{matern32, sq_exp, CtgpHyperparams};
use crate::linalg::{cholesky_with_jitter, log_det, sampling_factor, solve_lower, Chol};
use crate::rng;

/// Relative nugget on the correlation matrices; the squared-exponential
/// correlation is numerically singular on dense sampling schedules.
pub const CTGP_NUGGET: f64 = 1e-6;
const ACCEPTANCE_BAND: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtgpConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub sample_lengthscales: bool,
    /// Random-walk standard deviation on ln φ and ln ψ.
    pub mh_step: f64,
    /// Log-normal prior scale for φ and ψ (centred on the initial values).
    pub lengthscale_prior_scale: f64,
}

impl Default for CtgpConfig {
    fn default() -> Self {
        Self {
            iters: 3000,
            burn_in: 1000,
            thin: 1,
            sample_lengthscales: false,
            mh_step: 0.2,
            lengthscale_prior_scale: 1.0,
        }
    }
}

impl CtgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iters, self.burn_in
            )));
        }
        if self.thin == 0 || !(self.mh_step > 0.0) || !(self.lengthscale_prior_scale > 0.0) {
            return Err(Error::Config("thin, mh_step and prior scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtgpChain {
    pub times: Vec<f64>,
    pub n_units: usize,
    /// One entry per iteration, burn-in included.
    pub sigma2: Vec<f64>,
    pub tau2: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Latent f at the observed times, one row per retained iteration.
    pub f: DMatrix<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub prior: CtgpHyperparams,
    /// Post-burn-in Metropolis acceptance rate when lengthscales are sampled.
    pub acceptance_rate: Option<f64>,
    pub warnings: Vec<String>,
}

impl CtgpChain {
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    /// Iteration indices behind the rows of `f`.
    pub fn retained(&self) -> Vec<usize> {
        (self.burn_in..self.len()).step_by(self.thin).collect()
    }
}

fn corr_matrix(times: &[f64], kernel: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let p = times.len();
    let mut m = DMatrix::from_fn(p, p, |i, j| kernel(times[i] - times[j]));
    for i in 0..p {
        m[(i, i)] += CTGP_NUGGET;
    }
    m
}

fn factor(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    let scale = m.trace() / m.nrows() as f64;
    cholesky_with_jitter(m, scale, 1e-10, 1e-4, what).map(|(c, _)| c)
}

/// Correlation matrix and its factor for a lengthscale, cached by value.
struct CorrCache {
    times: Vec<f64>,
    matern: HashMap<u64, (DMatrix<f64>, Chol)>,
    sqexp: HashMap<u64, (DMatrix<f64>, Chol)>,
}

impl CorrCache {
    fn new(times: &[f64]) -> Self {
        Self {
            times: times.to_vec(),
            matern: HashMap::new(),
            sqexp: HashMap::new(),
        }
    }

    fn matern(&mut self, phi: f64) -> Result<&(DMatrix<f64>, Chol)> {
        if !self.matern.contains_key(&phi.to_bits()) {
            if self.matern.len() > 64 {
                self.matern.clear();
            }
            let k = corr_matrix(&self.times, |r| matern32(r, 1.0, phi));
            let c = factor(&k, "CTGP Matérn correlation")?;
            self.matern.insert(phi.to_bits(), (k, c));
        }
        Ok(&self.matern[&phi.to_bits()])
    }

    fn sqexp(&mut self, psi: f64) -> Result<&(DMatrix<f64>, Chol)> {
        if !self.sqexp.contains_key(&psi.to_bits()) {
            if self.sqexp.len() > 64 {
                self.sqexp.clear();
            }
            let h = corr_matrix(&self.times, |r| sq_exp(r, 1.0, psi));
            let c = factor(&h, "CTGP squared-exponential correlation")?;
            self.sqexp.insert(psi.to_bits(), (h, c));
        }
        Ok(&self.sqexp[&psi.to_bits()])
    }
}

fn quad_form(chol: &Chol, x: &DVector<f64>) -> f64 {
    solve_lower(chol, x).norm_squared()
}

fn draw_inv_gamma(r: &mut rng::Rng, shape: f64, rate: f64) -> f64 {
    let g: f64 = r.sample(Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters"));
    1.0 / g
}

/// Σ_j (y_j - f)ᵀ K⁻¹ (y_j - f).
fn residual_quad(ds: &DissolutionDataset, f: &DVector<f64>, k_chol: &Chol) -> f64 {
    (0..ds.n_units()).map(|j| quad_form(k_chol, &(ds.unit(j) - f))).sum()
}

/// Log density of the units and f given all variance and lengthscale values,
/// as a function of (φ, ψ); constants that do not depend on them are dropped.
fn lengthscale_log_target(
    ds: &DissolutionDataset,
    f: &DVector<f64>,
    sigma2: f64,
    tau2: f64,
    k: &Chol,
    h: &Chol,
) -> f64 {
    let n = ds.n_units() as f64;
    -0.5 * n * log_det(k) - 0.5 * residual_quad(ds, f, k) / sigma2 - 0.5 * log_det(h) - 0.5 * quad_form(h, f) / tau2
}

fn log_normal_kernel(x: f64, center: f64, scale: f64) -> f64 {
    // density of ln x under N(ln center, scale²), the proposal being symmetric in ln x
    -0.5 * ((x.ln() - center.ln()) / scale).powi(2)
}

/// Runs the Gibbs (and optional Metropolis) sampler.
pub fn ctgp_fit(ds: &DissolutionDataset, h0: &CtgpHyperparams, cfg: &CtgpConfig, seed: u64) -> Result<CtgpChain> {
    cfg.validate()?;
    if !(h0.sigma2 > 0.0 && h0.tau2 > 0.0 && h0.phi > 0.0 && h0.psi > 0.0 && h0.ig_alpha > 0.0 && h0.ig_beta > 0.0) {
        return Err(Error::Domain("CTGP hyperparameters and prior settings must be positive".into()));
    }
    let p = ds.n_times();
    let n = ds.n_units() as f64;
    let times = ds.times.clone();
    let ybar = ds.mean_vector();
    let mut cache = CorrCache::new(&times);
    let mut r = rng::seeded(seed);

    let (mut sigma2, mut tau2, mut phi, mut psi) = (h0.sigma2, h0.tau2, h0.phi, h0.psi);
    let retained = (cfg.iters - cfg.burn_in).div_ceil(cfg.thin);
    let mut chain = CtgpChain {
        times: times.clone(),
        n_units: ds.n_units(),
        sigma2: Vec::with_capacity(cfg.iters),
        tau2: Vec::with_capacity(cfg.iters),
        phi: Vec::with_capacity(cfg.iters),
        psi: Vec::with_capacity(cfg.iters),
        f: DMatrix::zeros(retained, p),
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed,
        prior: *h0,
        acceptance_rate: None,
        warnings: vec![],
    };
    let (mut proposals, mut accepted) = (0usize, 0usize);
    let mut row = 0;

    for it in 0..cfg.iters {
        // f | σ², τ², ȳ: prior A = τ²H, likelihood covariance B = σ²K/n
        let f = {
            let (k, _) = cache.matern(phi)?.clone();
            let (hm, _) = cache.sqexp(psi)?.clone();
            let a = &hm * tau2;
            let s = &a + &k * (sigma2 / n);
            let s_chol = factor(&s, "CTGP latent update")?;
            let mean = &a * s_chol.solve(&ybar);
            let cov = &a - &a * s_chol.solve(&a);
            let l = sampling_factor(&((&cov + cov.transpose()) * 0.5))?;
            let z = DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal));
            mean + l * z
        };

        let k_chol = cache.matern(phi)?.1.clone();
        let rss = residual_quad(ds, &f, &k_chol);
        sigma2 = draw_inv_gamma(&mut r, h0.ig_alpha + 0.5 * n * p as f64, h0.ig_beta + 0.5 * rss);
        let h_chol = cache.sqexp(psi)?.1.clone();
        tau2 = draw_inv_gamma(&mut r, h0.ig_alpha + 0.5 * p as f64, h0.ig_beta + 0.5 * quad_form(&h_chol, &f));

        if cfg.sample_lengthscales {
            for which in 0..2 {
                let (cur_phi, cur_psi) = (phi, psi);
                let step = cfg.mh_step * r.sample::<f64, _>(StandardNormal);
                let (new_phi, new_psi) = if which == 0 {
                    (phi * step.exp(), psi)
                } else {
                    (phi, psi * step.exp())
                };
                let current = lengthscale_log_target(ds, &f, sigma2, tau2, &cache.matern(cur_phi)?.1.clone(), &cache.sqexp(cur_psi)?.1.clone())
                    + log_normal_kernel(cur_phi, h0.phi, cfg.lengthscale_prior_scale)
                    + log_normal_kernel(cur_psi, h0.psi, cfg.lengthscale_prior_scale);
                let proposed = match (cache.matern(new_phi).map(|x| x.1.clone()), cache.sqexp(new_psi).map(|x| x.1.clone())) {
                    (Ok(kc), Ok(hc)) => {
                        lengthscale_log_target(ds, &f, sigma2, tau2, &kc, &hc)
                            + log_normal_kernel(new_phi, h0.phi, cfg.lengthscale_prior_scale)
                            + log_normal_kernel(new_psi, h0.psi, cfg.lengthscale_prior_scale)
                    }
                    _ => f64::NEG_INFINITY,
                };
                let accept = proposed.is_finite() && r.random::<f64>().ln() < proposed - current;
                if it >= cfg.burn_in {
                    proposals += 1;
                    accepted += accept as usize;
                }
                if accept {
                    phi = new_phi;
                    psi = new_psi;
                }
            }
        }

        chain.sigma2.push(sigma2);
        chain.tau2.push(tau2);
        chain.phi.push(phi);
        chain.psi.push(psi);
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            chain.f.row_mut(row).copy_from(&f.transpose());
            row += 1;
        }
    }

    if cfg.sample_lengthscales && proposals > 0 {
        let rate = accepted as f64 / proposals as f64;
        chain.acceptance_rate = Some(rate);
        if rate < ACCEPTANCE_BAND.0 || rate > ACCEPTANCE_BAND.1 {
            let msg = format!("Metropolis acceptance rate {rate:.3} outside [0.05, 0.95]");
            log::warn!("{msg}");
            chain.warnings.push(msg);
        }
    }
    Ok(chain)
}

/// Draws of f on `{observed times} ∪ grid`, one row per used iteration.
///
/// Columns hold the observed times first, then `grid`. At most `max_draws`
/// iterations are used, evenly spaced over the retained part of the chain.
pub fn ctgp_sample_f(chain: &CtgpChain, grid: &[f64], max_draws: Option<usize>, seed: u64) -> Result<DMatrix<f64>> {
    let retained = chain.retained();
    if retained.is_empty() {
        return Err(Error::Estimation("CTGP chain has no retained iterations".into()));
    }
    let total = retained.len();
    let m = max_draws.unwrap_or(total).clamp(1, total);
    let rows: Vec<usize> = (0..m).map(|i| i * total / m).collect();
    let p = chain.times.len();
    let g = grid.len();
    let mut out = DMatrix::zeros(m, p + g);
    let mut r = rng::seeded(seed);
    // conditional map and factor of f(grid) | f(obs), per ψ
    let mut maps: HashMap<u64, (DMatrix<f64>, DMatrix<f64>)> = HashMap::new();

    for (out_row, &chain_row) in rows.iter().enumerate() {
        let it = retained[chain_row];
        let psi = chain.psi[it];
        let tau2 = chain.tau2[it];
        let f_obs = chain.f.row(chain_row).transpose();
        out.view_mut((out_row, 0), (1, p)).copy_from(&f_obs.transpose());
        if g == 0 {
            continue;
        }
        if !maps.contains_key(&psi.to_bits()) {
            let h_oo = corr_matrix(&chain.times, |d| sq_exp(d, 1.0, psi));
            let h_chol = factor(&h_oo, "CTGP squared-exponential correlation")?;
            let h_go = DMatrix::from_fn(g, p, |i, j| sq_exp(grid[i] - chain.times[j], 1.0, psi));
            let h_gg = DMatrix::from_fn(g, g, |i, j| sq_exp(grid[i] - grid[j], 1.0, psi));
            let proj = h_chol.solve(&h_go.transpose()).transpose();
            let mut cond = h_gg - &proj * h_go.transpose();
            crate::linalg::symmetrize(&mut cond);
            let l = sampling_factor(&cond)?;
            maps.insert(psi.to_bits(), (proj, l));
        }
        let (proj, l) = &maps[&psi.to_bits()];
        let z = DVector::from_fn(g, |_, _| r.sample::<f64, _>(StandardNormal));
        let f_grid = proj * &f_obs + l * z * tau2.sqrt();
        out.view_mut((out_row, p), (1, g)).copy_from(&f_grid.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::logistic;
    use rand::SeedableRng;

    fn logistic_units(n: usize, sd: f64, seed: u64, times: &[f64]) -> DissolutionDataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| times.iter().map(|&t| logistic(t, 100.0, 75.0, 0.19) + sd * r.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        DissolutionDataset::from_rows("R", times.to_vec(), &rows).unwrap()
    }

    fn mean(x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / x.len() as f64
    }

    /// One time point: integrating σ² and τ² out analytically leaves
    /// p(f | y) ∝ (β + S(f)/2)^{-(α + n/2)} (β + f²/2)^{-(α + 1/2)}.
    #[test]
    fn one_point_posterior_matches_grid_integration() {
        let ys = [0.9, 1.4, 0.6, 1.2, 1.1];
        let ds = DissolutionDataset::from_rows("R", vec![1.0], &ys.iter().map(|&y| vec![y]).collect::<Vec<_>>()).unwrap();
        let h0 = CtgpHyperparams::default();
        let (al, be) = (h0.ig_alpha, h0.ig_beta);
        let n = ys.len() as f64;
        let log_post = |f: f64| {
            let s: f64 = ys.iter().map(|y| (y - f).powi(2)).sum();
            -(al + n / 2.0) * (be + s / 2.0).ln() - (al + 0.5) * (be + f * f / 2.0).ln()
        };
        let grid: Vec<f64> = (0..=8000).map(|i| -2.0 + 6.0 * i as f64 / 8000.0).collect();
        let w: Vec<f64> = grid.iter().map(|&f| log_post(f).exp()).collect();
        let z: f64 = w.iter().sum();
        let f_mean: f64 = grid.iter().zip(&w).map(|(f, w)| f * w).sum::<f64>() / z;
        // E[σ² | y] = E[(β + S/2) / (α + n/2 - 1)]
        let s2_mean: f64 = grid
            .iter()
            .zip(&w)
            .map(|(&f, w)| {
                let s: f64 = ys.iter().map(|y| (y - f).powi(2)).sum();
                w * (be + s / 2.0) / (al + n / 2.0 - 1.0)
            })
            .sum::<f64>()
            / z;

        let cfg = CtgpConfig { iters: 40_000, burn_in: 1000, ..Default::default() };
        let chain = ctgp_fit(&ds, &h0, &cfg, 11).unwrap();
        let fs: Vec<f64> = chain.f.column(0).iter().copied().collect();
        assert!((mean(&fs) - f_mean).abs() < 0.01, "{} vs {f_mean}", mean(&fs));
        let s2 = mean(&chain.sigma2[cfg.burn_in..]);
        assert!((s2 - s2_mean).abs() < 0.01, "{s2} vs {s2_mean}");
    }

    #[test]
    fn zero_data_reverts_to_prior_mean() {
        let times: Vec<f64> = (1..=6).map(|i| 10.0 * i as f64).collect();
        let ds = DissolutionDataset::from_rows("R", times.clone(), &vec![vec![0.0; 6]; 12]).unwrap();
        let chain = ctgp_fit(&ds, &CtgpHyperparams::default(), &CtgpConfig { iters: 600, burn_in: 100, ..Default::default() }, 3).unwrap();
        for col in chain.f.column_iter() {
            assert!(mean(col.as_slice()).abs() < 0.1);
        }
        assert!(chain.sigma2.iter().chain(&chain.tau2).all(|v| *v > 0.0));
    }

    #[test]
    fn reproducible_and_shaped() {
        let times: Vec<f64> = (1..=6).map(|i| 10.0 * i as f64).collect();
        let ds = logistic_units(12, 1.0, 1, &times);
        let cfg = CtgpConfig { iters: 300, burn_in: 100, ..Default::default() };
        let a = ctgp_fit(&ds, &CtgpHyperparams::default(), &cfg, 5).unwrap();
        let b = ctgp_fit(&ds, &CtgpHyperparams::default(), &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.f.nrows(), 200);
        let grid = crate::gp::linspace(10.0, 60.0, 500);
        let draws = ctgp_sample_f(&a, &grid, None, 1).unwrap();
        assert_eq!(draws.shape(), (200, 506));
        let obs_only = ctgp_sample_f(&a, &[], None, 1).unwrap();
        assert_eq!(obs_only, a.f);
    }

    #[test]
    fn gaps_revert_and_widen() {
        let all: Vec<f64> = (1..=6).map(|i| 10.0 * i as f64).collect();
        let full = logistic_units(12, 1.0, 2, &all);
        let ds = full.select_times(&[0, 1, 4, 5]).unwrap();
        let chain = ctgp_fit(&ds, &CtgpHyperparams::default(), &CtgpConfig { iters: 1500, burn_in: 500, ..Default::default() }, 9).unwrap();
        let draws = ctgp_sample_f(&chain, &[35.0], None, 4).unwrap();
        let gap: Vec<f64> = draws.column(4).iter().copied().collect();
        let at_obs: Vec<f64> = draws.column(1).iter().copied().collect();
        let var = |x: &[f64]| {
            let m = mean(x);
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
        };
        assert!(var(&gap) > var(&at_obs));
        // the truth at t = 35 is ~ 84; the zero-mean prior pulls the gap below it
        let truth = logistic(35.0, 100.0, 75.0, 0.19);
        assert!(mean(&gap) < truth - 1.0, "{} vs {truth}", mean(&gap));
    }

    #[test]
    fn metropolis_records_acceptance() {
        let times: Vec<f64> = (1..=6).map(|i| 10.0 * i as f64).collect();
        let ds = logistic_units(12, 1.0, 3, &times);
        let cfg = CtgpConfig { iters: 800, burn_in: 200, sample_lengthscales: true, ..Default::default() };
        let chain = ctgp_fit(&ds, &CtgpHyperparams::default(), &cfg, 1).unwrap();
        let rate = chain.acceptance_rate.unwrap();
        assert!((0.0..=1.0).contains(&rate));
        assert!(chain.phi.iter().chain(&chain.psi).all(|v| *v > 0.0));
        assert!(chain.phi.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn rejects_bad_config() {
        let ds = logistic_units(3, 1.0, 1, &[10.0, 20.0, 30.0]);
        let cfg = CtgpConfig { iters: 10, burn_in: 10, ..Default::default() };
        assert!(matches!(ctgp_fit(&ds, &CtgpHyperparams::default(), &cfg, 1), Err(Error::Config(_))));
    }
}
