//! Exact LSGP inference: posterior, marginal likelihood, sampling and the
//! basis-function view of the posterior mean.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DissolutionDataset;
use crate::error::{Error, Result};
use crate::kernels::{build_gram, kernel_matrix, logistic_mean, noise_variance, LsgpHyperparams, SplineOrder};
use crate::linalg::{log_det, sampling_factor, solve_lower, solve_lower_mat, symmetrize};
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Default number of prediction points between the first and last sampling time.
pub const DEFAULT_GRID_R: usize = 500;

/// `r` equally spaced points on `[t1, tp]`.
pub fn linspace(t1: f64, tp: f64, r: usize) -> Vec<f64> {
    match r {
        0 => vec![],
        1 => vec![t1],
        _ => (0..r)
            .map(|i| t1 + (tp - t1) * i as f64 / (r - 1) as f64)
            .collect(),
    }
}

/// The sufficient statistics of a dataset for the LSGP likelihood: the mean
/// profile and the per-time within-unit scatter Σ_j (y_j(t_i) - ȳ(t_i))².
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSummary {
    pub times: Vec<f64>,
    pub ybar: DVector<f64>,
    pub scatter: DVector<f64>,
    pub n: usize,
}

impl ProfileSummary {
    pub fn from_dataset(ds: &DissolutionDataset) -> Self {
        let ybar = ds.mean_vector();
        let scatter = DVector::from_iterator(
            ds.n_times(),
            ds.values
                .column_iter()
                .zip(ybar.iter())
                .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>()),
        );
        Self {
            times: ds.times.clone(),
            ybar,
            scatter,
            n: ds.n_units(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPosterior {
    pub grid: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub noise_at_grid: DVector<f64>,
    pub hyperparams: LsgpHyperparams,
    pub n_units: usize,
}

impl GpPosterior {
    /// A posterior with fixed mean and covariance, for tests and composition.
    pub fn from_parts(grid: Vec<f64>, mean: DVector<f64>, cov: DMatrix<f64>, noise_at_grid: DVector<f64>) -> Self {
        Self {
            grid,
            mean,
            cov,
            noise_at_grid,
            hyperparams: LsgpHyperparams {
                alpha1: 1.0,
                alpha2: 1.0,
                beta: 1.0,
                tau2: 0.0,
                a: 0.0,
                b: 0.0,
            },
            n_units: 1,
        }
    }

    pub fn variance(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| v.max(0.0))
    }

    /// Covariance of a new observation y(t*): K_p + diag σ²(t*).
    pub fn y_cov(&self) -> DMatrix<f64> {
        let mut c = self.cov.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += self.noise_at_grid[i];
        }
        c
    }

    /// Pointwise central 95% band of f.
    pub fn band95(&self) -> (DVector<f64>, DVector<f64>) {
        let sd = self.variance().map(f64::sqrt);
        (&self.mean - &sd * 1.959_963_984_540_054, &self.mean + &sd * 1.959_963_984_540_054)
    }
}

/// Posterior of f on `grid` given the dataset, with the cubic spline kernel.
pub fn fit_posterior(ds: &DissolutionDataset, h: &LsgpHyperparams, grid: &[f64]) -> Result<GpPosterior> {
    fit_posterior_with_order(ds, h, grid, SplineOrder::Cubic)
}

pub fn fit_posterior_with_order(
    ds: &DissolutionDataset,
    h: &LsgpHyperparams,
    grid: &[f64],
    order: SplineOrder,
) -> Result<GpPosterior> {
    posterior_from_summary(&ProfileSummary::from_dataset(ds), h, grid, order)
}

pub fn posterior_from_summary(
    s: &ProfileSummary,
    h: &LsgpHyperparams,
    grid: &[f64],
    order: SplineOrder,
) -> Result<GpPosterior> {
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("prediction grid must be nonempty and finite".into()));
    }
    let g = build_gram(&s.times, h, s.n, order)?;
    let resid = &s.ybar - &g.mu;
    let alpha = g.v_chol.solve(&resid);
    let k_star = kernel_matrix(grid, &s.times, h, order);
    let mu_grid = DVector::from_iterator(grid.len(), grid.iter().map(|&t| logistic_mean(t, h)));
    let mean = mu_grid + &k_star * alpha;

    let w = solve_lower_mat(&g.v_chol, &k_star.transpose());
    let mut cov = kernel_matrix(grid, grid, h, order) - w.transpose() * w;
    symmetrize(&mut cov);
    let noise_at_grid = DVector::from_iterator(grid.len(), grid.iter().map(|&t| noise_variance(t, h)));
    Ok(GpPosterior {
        grid: grid.to_vec(),
        mean,
        cov,
        noise_at_grid,
        hyperparams: *h,
        n_units: s.n,
    })
}

/// Log marginal likelihood of all unit profiles under the cubic kernel.
pub fn log_marginal_likelihood(ds: &DissolutionDataset, h: &LsgpHyperparams) -> Result<f64> {
    log_marginal_likelihood_summary(&ProfileSummary::from_dataset(ds), h, SplineOrder::Cubic)
}

pub fn log_marginal_likelihood_summary(s: &ProfileSummary, h: &LsgpHyperparams, order: SplineOrder) -> Result<f64> {
    let p = s.times.len() as f64;
    let n = s.n as f64;
    let g = build_gram(&s.times, h, s.n, order)?;
    let log_det_d: f64 = s.times.iter().map(|&t| h.a + h.b * t).sum();
    let resid = &s.ybar - &g.mu;
    let z = solve_lower(&g.v_chol, &resid);
    let log_n = -0.5 * p * LN_2PI - 0.5 * log_det(&g.v_chol) - 0.5 * z.norm_squared();
    let within: f64 = s.scatter.iter().zip(g.d.iter()).map(|(ss, d)| ss / d).sum();
    Ok(-0.5 * p * (n - 1.0) * LN_2PI - 0.5 * p * n.ln() - 0.5 * (n - 1.0) * log_det_d + log_n - 0.5 * within)
}

/// Draws `m` joint samples of f (or of y when `include_noise`) on the posterior grid.
pub fn sample_posterior(post: &GpPosterior, m: usize, seed: u64, include_noise: bool) -> Result<DMatrix<f64>> {
    sample_posterior_rng(post, m, &mut rng::seeded(seed), include_noise)
}

pub fn sample_posterior_rng(
    post: &GpPosterior,
    m: usize,
    rng: &mut rng::Rng,
    include_noise: bool,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let g = post.grid.len();
    let l = sampling_factor(&post.cov)?;
    let z = DMatrix::<f64>::from_fn(g, m, |_, _| rng.sample(StandardNormal));
    let mut draws = (l * z).transpose();
    for mut row in draws.row_iter_mut() {
        row += post.mean.transpose();
    }
    if include_noise {
        for j in 0..g {
            let sd = post.noise_at_grid[j].sqrt();
            for i in 0..m {
                let e: f64 = rng.sample(StandardNormal);
                draws[(i, j)] += sd * e;
            }
        }
    }
    Ok(draws)
}

/// Posterior mean written as prior mean plus γ-weighted spline basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDecomposition {
    pub grid: Vec<f64>,
    pub gamma: DVector<f64>,
    pub prior_mean_component: DVector<f64>,
    /// Row i holds basis function i, τ² W_2(μ(t), μ(t_i)), on the grid.
    pub basis_components: DMatrix<f64>,
}

impl BasisDecomposition {
    pub fn reconstruct(&self) -> DVector<f64> {
        &self.prior_mean_component + self.basis_components.transpose() * &self.gamma
    }
}

pub fn basis_decomposition(ds: &DissolutionDataset, h: &LsgpHyperparams, grid: &[f64]) -> Result<BasisDecomposition> {
    let s = ProfileSummary::from_dataset(ds);
    let g = build_gram(&s.times, h, s.n, SplineOrder::Cubic)?;
    let gamma = g.v_chol.solve(&(&s.ybar - &g.mu));
    let prior_mean_component = DVector::from_iterator(grid.len(), grid.iter().map(|&t| logistic_mean(t, h)));
    let basis_components = kernel_matrix(&s.times, grid, h, SplineOrder::Cubic);
    Ok(BasisDecomposition {
        grid: grid.to_vec(),
        gamma,
        prior_mean_component,
        basis_components,
    })
}
