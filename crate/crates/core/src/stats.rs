//! Distribution quantiles, quadrature and small summary helpers.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};

/// Smallest `x ≥ 0` with `cdf(x) ≥ prob`, by bracketing and bisection.
fn invert_cdf(prob: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut hi = 1.0;
    while cdf(hi) < prob {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_prob(prob: f64) -> Result<()> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {prob}")));
    }
    Ok(())
}

/// Quantile of the χ² distribution with `df` degrees of freedom.
pub fn chi2_quantile(prob: f64, df: f64) -> Result<f64> {
    check_prob(prob)?;
    if !(df > 0.0) {
        return Err(Error::DegreesOfFreedom(format!("chi-squared df = {df}")));
    }
    Ok(invert_cdf(prob, |x| gamma_lr(0.5 * df, 0.5 * x)))
}

/// Quantile of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_quantile(prob: f64, d1: f64, d2: f64) -> Result<f64> {
    check_prob(prob)?;
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return Err(Error::DegreesOfFreedom(format!("F df = ({d1}, {d2})")));
    }
    Ok(invert_cdf(prob, |x| beta_reg(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1` (0 for a single value).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of a sample (type 7).
pub fn sample_quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
