//! Unconstrained minimizers: Nelder–Mead simplex search and BFGS with
//! central-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop once max f - min f over the simplex falls below this.
    pub f_tol: f64,
    /// Initial simplex edge per coordinate.
    pub step: Vec<f64>,
}

impl NelderMead {
    pub fn new(step: Vec<f64>) -> Self {
        Self {
            max_iter: 2000,
            f_tol: 1e-8,
            step,
        }
    }

    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> OptResult {
        let n = x0.len();
        let nf = n as f64;
        // dimension-adaptive coefficients
        let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf.max(2.0));
        let mut evals = 0usize;
        let mut eval = |x: &[f64]| {
            evals += 1;
            finite_or_inf(f(x))
        };

        let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += self.step.get(i).copied().unwrap_or(0.1);
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            if values[0].is_finite() && spread.abs() < self.f_tol {
                converged = true;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let fr = eval(&xr);
            if fr < values[0] {
                let xe = along(gamma);
                let fe = eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[n] {
                let xc = along(rho);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            let best = simplex[0].clone();
            for i in 1..=n {
                for (x, b) in simplex[i].iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                values[i] = eval(&simplex[i]);
            }
        }

        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        OptResult {
            x: simplex[best].clone(),
            fx: values[best],
            iterations,
            evaluations: evals,
            converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bfgs {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Stop when the relative decrease of f stays below this.
    pub f_rel_tol: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-5,
            f_rel_tol: 1e-12,
        }
    }
}

pub fn central_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

impl Bfgs {
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> OptResult {
        let n = x0.len();
        let fsafe = |x: &[f64]| finite_or_inf(f(x));
        let mut x = DVector::from_column_slice(x0);
        let mut fx = fsafe(x.as_slice());
        let mut evals = 1;
        if !fx.is_finite() {
            return OptResult {
                x: x0.to_vec(),
                fx,
                iterations: 0,
                evaluations: evals,
                converged: false,
            };
        }
        let mut g = central_gradient(&fsafe, x.as_slice());
        evals += 2 * n;
        let mut hinv = DMatrix::<f64>::identity(n, n);
        let mut converged = false;
        let mut iterations = 0;
        let mut stalls = 0;

        while iterations < self.max_iter {
            if g.amax() < self.grad_tol {
                converged = true;
                break;
            }
            iterations += 1;
            let mut dir = -(&hinv * &g);
            if dir.dot(&g) >= 0.0 {
                hinv = DMatrix::identity(n, n);
                dir = -g.clone();
            }
            let slope = dir.dot(&g);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let xn = &x + &dir * step;
                let fnew = fsafe(xn.as_slice());
                evals += 1;
                if fnew <= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
                step *= 0.5;
            }
            let Some((xn, fnew)) = accepted else {
                if hinv == DMatrix::identity(n, n) {
                    break;
                }
                hinv = DMatrix::identity(n, n);
                continue;
            };
            let gn = central_gradient(&fsafe, xn.as_slice());
            evals += 2 * n;
            let s = &xn - &x;
            let y = &gn - &g;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(n, n);
                let a = &i - &s * y.transpose() * rho;
                let b = &i - &y * s.transpose() * rho;
                hinv = &a * &hinv * &b + &s * s.transpose() * rho;
            }
            let rel = (fx - fnew).abs() / fx.abs().max(1.0);
            x = xn;
            fx = fnew;
            g = gn;
            if rel < self.f_rel_tol {
                stalls += 1;
                if stalls >= 3 {
                    converged = true;
                    break;
                }
            } else {
                stalls = 0;
            }
        }
        OptResult {
            x: x.as_slice().to_vec(),
            fx,
            iterations,
            evaluations: evals,
            converged,
        }
    }
}
