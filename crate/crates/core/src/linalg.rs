//! Dense factorization helpers shared by the model code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Factorizes `a + j I`, first with `j = 0`, then from `j = start_rel * scale`
/// escalating by a factor of ten up to `max_rel * scale`. Returns the factor
/// and the absolute jitter that succeeded.
pub fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    scale: f64,
    start_rel: f64,
    max_rel: f64,
    context: &str,
) -> Result<(Chol, f64)> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Conditioning {
            context: format!("{context}: non-finite entries"),
            jitters: vec![],
        });
    }
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 0.0 };
    if let Some(c) = Cholesky::new(a.clone()) {
        if c.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Ok((c, 0.0));
        }
    }
    let mut tried = vec![0.0];
    let mut rel = start_rel;
    loop {
        let jitter = rel * scale;
        tried.push(jitter);
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((c, jitter));
            }
        }
        rel *= 10.0;
        if rel > max_rel * (1.0 + 1e-9) || scale == 0.0 {
            return Err(Error::Conditioning {
                context: context.to_string(),
                jitters: tried,
            });
        }
    }
}

pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves L x = b for the lower Cholesky factor.
pub fn solve_lower(chol: &Chol, b: &DVector<f64>) -> DVector<f64> {
    chol.l_dirty()
        .solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

pub fn solve_lower_mat(chol: &Chol, b: &DMatrix<f64>) -> DMatrix<f64> {
    chol.l_dirty()
        .solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// A matrix `L` with `L Lᵀ ≈ cov` for drawing correlated Gaussians.
///
/// Tries a jittered Cholesky first (posterior covariances on dense grids are
/// numerically rank deficient) and falls back to an eigen decomposition with
/// negative eigenvalues clipped to zero.
pub fn sampling_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::Conditioning {
            context: "covariance for sampling has non-finite entries".into(),
            jitters: vec![],
        });
    }
    let scale = (0..n).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Ok((c, _)) = cholesky_with_jitter(cov, scale, 1e-12, 1e-8, "sampling covariance") {
        return Ok(c.unpack());
    }
    let eig = cov.clone().symmetric_eigen();
    let mut q = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        q.column_mut(j).scale_mut(s);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_singular_psd() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (c, j) = cholesky_with_jitter(&a, 1.0, 1e-10, 1e-4, "test").unwrap();
        assert!(j > 0.0 && j <= 1e-4);
        assert!((log_det(&c) - (j * (2.0 + j)).ln()).abs() < 1e-6);
    }

    #[test]
    fn indefinite_matrix_fails_with_levels() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky_with_jitter(&a, 1.0, 1e-10, 1e-4, "test") {
            Err(Error::Conditioning { jitters, .. }) => assert_eq!(jitters.len(), 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sampling_factor_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let l = sampling_factor(&a).unwrap();
        assert!((&l * l.transpose() - &a).amax() < 1e-6);
        assert_eq!(sampling_factor(&DMatrix::zeros(2, 2)).unwrap(), DMatrix::zeros(2, 2));
    }
}
