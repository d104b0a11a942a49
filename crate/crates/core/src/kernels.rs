//! Mean functions, covariance kernels and the noise model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, Chol};

/// LSGP hyperparameters θ = [α1, α2, β, τ², a, b].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsgpHyperparams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub tau2: f64,
    pub a: f64,
    pub b: f64,
}

impl LsgpHyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::Domain(format!("tau2 must be nonnegative, got {}", self.tau2)));
        }
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::Domain("noise coefficients a, b must be finite".into()));
        }
        Ok(())
    }
}

/// CTGP hyperparameters and inverse-gamma prior settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtgpHyperparams {
    pub sigma2: f64,
    pub tau2: f64,
    pub phi: f64,
    pub psi: f64,
    pub ig_alpha: f64,
    pub ig_beta: f64,
}

impl Default for CtgpHyperparams {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            tau2: 1.0,
            phi: 5.0,
            psi: 25.0,
            ig_alpha: 10.0,
            ig_beta: 3.0,
        }
    }
}

/// Fold q of the integrated Wiener kernel: q = 1 linear, q = 2 cubic spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplineOrder {
    Linear,
    #[default]
    Cubic,
}

impl SplineOrder {
    pub fn from_q(q: u32) -> Result<Self> {
        match q {
            1 => Ok(Self::Linear),
            2 => Ok(Self::Cubic),
            _ => Err(Error::Config(format!("spline order q must be 1 or 2, got {q}"))),
        }
    }

    pub fn q(self) -> u32 {
        match self {
            Self::Linear => 1,
            Self::Cubic => 2,
        }
    }
}

pub fn logistic(t: f64, alpha1: f64, alpha2: f64, beta: f64) -> f64 {
    alpha1 / (1.0 + alpha2 * (-beta * t).exp())
}

/// μ(t) = α1 / (1 + α2 e^{-βt}).
pub fn logistic_mean(t: f64, h: &LsgpHyperparams) -> f64 {
    logistic(t, h.alpha1, h.alpha2, h.beta)
}

#[inline]
pub(crate) fn wiener_unchecked(order: SplineOrder, s: f64, s2: f64) -> f64 {
    let v = s.min(s2);
    match order {
        SplineOrder::Linear => v,
        SplineOrder::Cubic => v * v * v / 3.0 + 0.5 * v * v * (s - s2).abs(),
    }
}

/// Covariance of the q-fold integrated Wiener process.
pub fn wiener_kernel(order: SplineOrder, s: f64, s2: f64) -> Result<f64> {
    if s < 0.0 || s2 < 0.0 || !s.is_finite() || !s2.is_finite() {
        return Err(Error::Domain(format!(
            "Wiener kernel inputs must be nonnegative, got ({s}, {s2})"
        )));
    }
    Ok(wiener_unchecked(order, s, s2))
}

/// τ² W_q(μ(t), μ(t')).
pub fn dissolution_spline_kernel(t: f64, t2: f64, h: &LsgpHyperparams, order: SplineOrder) -> f64 {
    h.tau2 * wiener_unchecked(order, logistic_mean(t, h), logistic_mean(t2, h))
}

/// τ² W_q(t, t') with the identity warp; exposes the plain spline kernel.
pub fn linear_warp_kernel(t: f64, t2: f64, tau2: f64, order: SplineOrder) -> Result<f64> {
    Ok(tau2 * wiener_kernel(order, t, t2)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationaryKind {
    Matern32,
    SqExp,
}

pub fn matern32(r: f64, variance: f64, phi: f64) -> f64 {
    let x = 3f64.sqrt() * r.abs() / phi;
    variance * (1.0 + x) * (-x).exp()
}

pub fn sq_exp(r: f64, variance: f64, psi: f64) -> f64 {
    variance * (-(r * r) / (2.0 * psi * psi)).exp()
}

/// The CTGP kernels: Matérn-3/2 scaled by σ², squared-exponential scaled by τ².
pub fn stationary_kernel(kind: StationaryKind, t: f64, t2: f64, h: &CtgpHyperparams) -> f64 {
    match kind {
        StationaryKind::Matern32 => matern32(t - t2, h.sigma2, h.phi),
        StationaryKind::SqExp => sq_exp(t - t2, h.tau2, h.psi),
    }
}

/// σ²(t) = exp(a + bt).
pub fn noise_variance(t: f64, h: &LsgpHyperparams) -> f64 {
    (h.a + h.b * t).exp()
}

/// Cross-covariance matrix K(rows, cols).
pub fn kernel_matrix(rows: &[f64], cols: &[f64], h: &LsgpHyperparams, order: SplineOrder) -> DMatrix<f64> {
    let wr: Vec<f64> = rows.iter().map(|&t| logistic_mean(t, h)).collect();
    let wc: Vec<f64> = cols.iter().map(|&t| logistic_mean(t, h)).collect();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        h.tau2 * wiener_unchecked(order, wr[i], wc[j])
    })
}

/// Relative jitter schedule for the prior Gram matrix.
pub const GRAM_JITTER_START: f64 = 1e-10;
pub const GRAM_JITTER_MAX: f64 = 1e-4;

/// Prior matrices at the observed times.
#[derive(Debug, Clone)]
pub struct GramMatrices {
    pub k: DMatrix<f64>,
    /// Diagonal of D.
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
    pub mu: DVector<f64>,
    /// Absolute jitter added to the diagonal of K.
    pub jitter: f64,
    pub v_chol: Chol,
}

/// Builds K, D, V = K + D/n and μ, adding escalating diagonal jitter to K
/// until V factorizes.
pub fn build_gram(times: &[f64], h: &LsgpHyperparams, n: usize, order: SplineOrder) -> Result<GramMatrices> {
    if n == 0 {
        return Err(Error::Domain("unit count must be positive".into()));
    }
    h.validate()?;
    let mut k = kernel_matrix(times, times, h, order);
    let d = DVector::from_iterator(times.len(), times.iter().map(|&t| noise_variance(t, h)));
    let mut v = k.clone();
    for i in 0..times.len() {
        v[(i, i)] += d[i] / n as f64;
    }
    let scale = k.trace() / times.len().max(1) as f64;
    let (v_chol, jitter) = cholesky_with_jitter(&v, scale, GRAM_JITTER_START, GRAM_JITTER_MAX, "LSGP Gram matrix V")?;
    for i in 0..times.len() {
        k[(i, i)] += jitter;
        v[(i, i)] += jitter;
    }
    let mu = DVector::from_iterator(times.len(), times.iter().map(|&t| logistic_mean(t, h)));
    Ok(GramMatrices { k, d, v, mu, jitter, v_chol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn h0() -> LsgpHyperparams {
        LsgpHyperparams {
            alpha1: 100.0,
            alpha2: 75.0,
            beta: 0.19,
            tau2: 1.0,
            a: 0.0,
            b: 0.0,
        }
    }

    #[test]
    fn logistic_values() {
        let h = h0();
        assert_relative_eq!(logistic_mean(0.0, &h), 100.0 / 76.0, epsilon = 1e-12);
        assert_relative_eq!(logistic_mean(1e6, &h), 100.0, epsilon = 1e-12);
        let direct = 100.0 / (1.0 + 75.0 * (-11.4f64).exp());
        assert_relative_eq!(logistic_mean(60.0, &h), direct, epsilon = 1e-12);
        assert!((logistic_mean(60.0, &h) - 99.9165).abs() < 1e-3);
    }

    #[test]
    fn wiener_values() {
        assert_eq!(wiener_kernel(SplineOrder::Linear, 3.0, 5.0).unwrap(), 3.0);
        assert_relative_eq!(wiener_kernel(SplineOrder::Cubic, 1.0, 2.0).unwrap(), 5.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(wiener_kernel(SplineOrder::Cubic, 1.7, 1.7).unwrap(), 1.7f64.powi(3) / 3.0, epsilon = 1e-15);
        assert!(matches!(wiener_kernel(SplineOrder::Cubic, -1.0, 2.0), Err(Error::Domain(_))));
    }

    /// Midpoint rule on the integral definition ∫_0^min (s-z)^{q-1}(s'-z)^{q-1}/((q-1)!)² dz.
    fn wiener_integral(q: u32, s: f64, s2: f64) -> f64 {
        let v = s.min(s2);
        let m = 200_000;
        let hstep = v / m as f64;
        // (q - 1)! = 1 for q <= 2
        (0..m)
            .map(|i| {
                let z = (i as f64 + 0.5) * hstep;
                (s - z).powi(q as i32 - 1) * (s2 - z).powi(q as i32 - 1)
            })
            .sum::<f64>()
            * hstep
    }

    #[test]
    fn wiener_matches_integral_definition() {
        for &(s, s2) in &[(1.0, 2.0), (0.3, 0.9), (2.5, 1.1)] {
            for order in [SplineOrder::Linear, SplineOrder::Cubic] {
                let closed = wiener_kernel(order, s, s2).unwrap();
                let numeric = wiener_integral(order.q(), s, s2);
                assert_relative_eq!(closed, numeric, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn spline_kernel_values() {
        let h = h0();
        let expected = (100.0f64 / 76.0).powi(3) / 3.0;
        assert_relative_eq!(dissolution_spline_kernel(0.0, 0.0, &h, SplineOrder::Cubic), expected, epsilon = 1e-12);
        assert!((expected - 0.7593).abs() < 1e-4);
        let zero = LsgpHyperparams { tau2: 0.0, ..h };
        assert_eq!(dissolution_spline_kernel(3.0, 40.0, &zero, SplineOrder::Cubic), 0.0);
    }

    #[test]
    fn stationary_values() {
        let h = CtgpHyperparams { sigma2: 1.0, tau2: 2.0, ..Default::default() };
        assert_eq!(stationary_kernel(StationaryKind::Matern32, 4.0, 4.0, &h), 1.0);
        assert_relative_eq!(
            stationary_kernel(StationaryKind::SqExp, 0.0, h.psi * 2f64.sqrt(), &h),
            2.0 * (-1.0f64).exp(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            stationary_kernel(StationaryKind::Matern32, 0.0, h.phi / 3f64.sqrt(), &h),
            2.0 * (-1.0f64).exp(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn noise_values() {
        let h = LsgpHyperparams { a: 4f64.ln(), b: 0.0, ..h0() };
        assert_relative_eq!(noise_variance(13.0, &h), 4.0, epsilon = 1e-12);
        let h = LsgpHyperparams { a: 0.0, b: 0.1, ..h0() };
        assert_relative_eq!(noise_variance(10.0, &h), std::f64::consts::E, epsilon = 1e-12);
        let h = LsgpHyperparams { a: 0.0, b: -0.1, ..h0() };
        assert!(noise_variance(11.0, &h) < noise_variance(10.0, &h));
    }

    #[test]
    fn gram_scalar_and_pure_noise() {
        let h = LsgpHyperparams { a: 2f64.ln(), ..h0() };
        let g = build_gram(&[10.0], &h, 4, SplineOrder::Cubic).unwrap();
        let k = dissolution_spline_kernel(10.0, 10.0, &h, SplineOrder::Cubic);
        assert_relative_eq!(g.v[(0, 0)], k + 0.5, max_relative = 1e-9);

        let h = LsgpHyperparams { tau2: 0.0, a: 0.0, b: 0.0, ..h0() };
        let g = build_gram(&[10.0, 20.0, 30.0], &h, 1, SplineOrder::Cubic).unwrap();
        assert_eq!(g.v, DMatrix::identity(3, 3));
    }

    #[test]
    fn gram_failure_reports_jitter_levels() {
        // a huge negative noise intercept with tau2 = 0 leaves V numerically zero
        let h = LsgpHyperparams { tau2: 0.0, a: -800.0, ..h0() };
        match build_gram(&[10.0, 20.0], &h, 1, SplineOrder::Cubic) {
            Err(Error::Conditioning { jitters, .. }) => assert!(!jitters.is_empty()),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    fn arb_h() -> impl Strategy<Value = LsgpHyperparams> {
        (1.0..150.0f64, 0.5..500.0f64, 0.01..1.0f64, 1e-4..10.0f64, -3.0..3.0f64, -0.1..0.1f64).prop_map(
            |(alpha1, alpha2, beta, tau2, a, b)| LsgpHyperparams { alpha1, alpha2, beta, tau2, a, b },
        )
    }

    fn arb_grid() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.5..10.0f64, 1..=12).prop_map(|steps| {
            let mut t = 0.0;
            steps
                .into_iter()
                .map(|s| {
                    t += s;
                    t
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn kernel_matrix_is_psd(h in arb_h(), grid in arb_grid()) {
            let k = kernel_matrix(&grid, &grid, &h, SplineOrder::Cubic);
            let eig = k.clone().symmetric_eigen().eigenvalues;
            let max = eig.max();
            prop_assert!(eig.min() >= -1e-9 * max.max(1.0));
        }

        #[test]
        fn kernel_is_symmetric(h in arb_h(), t in 0.0..80.0f64, t2 in 0.0..80.0f64) {
            let k1 = dissolution_spline_kernel(t, t2, &h, SplineOrder::Cubic);
            let k2 = dissolution_spline_kernel(t2, t, &h, SplineOrder::Cubic);
            prop_assert_eq!(k1, k2);
        }

        #[test]
        fn logistic_is_increasing(h in arb_h()) {
            let mut prev = logistic_mean(0.0, &h);
            for i in 1..=600 {
                let cur = logistic_mean(i as f64 * 0.1, &h);
                prop_assert!(cur > prev || (cur - h.alpha1).abs() < 1e-12 * h.alpha1);
                prev = cur;
            }
        }

        #[test]
        fn linear_warp_reproduces_wiener(s in 0.0..50.0f64, s2 in 0.0..50.0f64, tau2 in 0.0..5.0f64) {
            for order in [SplineOrder::Linear, SplineOrder::Cubic] {
                let k = linear_warp_kernel(s, s2, tau2, order).unwrap();
                prop_assert_eq!(k, tau2 * wiener_kernel(order, s, s2).unwrap());
            }
        }

        #[test]
        fn log_noise_is_linear(a in -5.0..5.0f64, b in -0.2..0.2f64, t1 in 0.0..30.0f64, dt in 1.0..30.0f64) {
            let h = LsgpHyperparams { a, b, ..h0() };
            let (t2, l1, l2) = (t1 + dt, noise_variance(t1, &h).ln(), noise_variance(t1 + dt, &h).ln());
            prop_assert!(noise_variance(t1, &h) > 0.0);
            let slope = (l2 - l1) / (t2 - t1);
            prop_assert!((slope - b).abs() < 1e-9);
            prop_assert!((l1 - slope * t1 - a).abs() < 1e-9);
        }
    }
}
