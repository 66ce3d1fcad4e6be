//! Extreme eigenvalues and induced 2-norms of band matrices.
//!
//! Symmetric matrices go through Lanczos with full reorthogonalization; the
//! Ritz values come from Sturm-sequence bisection on the tridiagonal
//! projection. A Ritz pair is accepted once its residual `beta_j |y_j|`
//! drops below `tol` relative to the spectral radius estimate.

use super::{BandLu, BandMatrix, GridError};

pub const DEFAULT_NORM_TOL: f64 = 1e-8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 {
            0.0
        } else {
            beta[i - 1] * beta[i - 1]
        };
        q = alpha[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::MIN_POSITIVE;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `(lambda_min, lambda_max)` of a symmetric tridiagonal matrix.
fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    let (mut glo, mut ghi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 }
            + if i + 1 < m { beta[i].abs() } else { 0.0 };
        glo = glo.min(alpha[i] - r);
        ghi = ghi.max(alpha[i] + r);
    }
    let bisect = |target: usize| {
        let (mut a, mut b) = (glo, ghi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(alpha, beta, mid) >= target {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(m))
}

/// Last component of the unit eigenvector of the tridiagonal for `theta`,
/// by shifted inverse iteration.
fn ritz_tail(alpha: &[f64], beta: &[f64], theta: f64, scale: f64) -> f64 {
    let m = alpha.len();
    if m == 1 {
        return 1.0;
    }
    let mut t = BandMatrix::zeros(m, 1);
    for i in 0..m {
        t.set(i, i, alpha[i]);
        if i + 1 < m {
            t.set(i, i + 1, beta[i]);
            t.set(i + 1, i, beta[i]);
        }
    }
    let mut delta = 1e-10 * scale.max(f64::MIN_POSITIVE);
    for _ in 0..8 {
        let shifted = t.lin_comb(1.0, &BandMatrix::identity(m), -(theta + delta));
        if let Ok(lu) = BandLu::factor_with_tol(&shifted, 0.0) {
            let mut y = vec![1.0; m];
            for _ in 0..3 {
                lu.solve_in_place(&mut y);
                let n = norm(&y);
                if !n.is_finite() || n == 0.0 {
                    break;
                }
                y.iter_mut().for_each(|v| *v /= n);
            }
            if y.iter().all(|v| v.is_finite()) {
                return y[m - 1].abs();
            }
        }
        delta *= 10.0;
    }
    1.0
}

/// Smallest and largest eigenvalue of a symmetric band matrix.
pub fn extreme_eigenvalues(m: &BandMatrix, tol: f64) -> Result<(f64, f64), GridError> {
    if !m.is_symmetric() {
        return Err(GridError::NotSymmetric);
    }
    if !m.is_finite() {
        return Err(GridError::NoConvergence { iterations: 0 });
    }
    let n = m.dim();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    if m.is_diagonal() {
        let d = m.diagonal();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok((lo, hi));
    }
    let tol = if tol > 0.0 { tol } else { DEFAULT_NORM_TOL };
    let cap = 10 * n;

    // all-ones plus a ramp: all-ones alone is orthogonal to every
    // antisymmetric eigenvector of a reflection-symmetric matrix
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / n as f64).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let anorm = m.max_abs() * (2 * m.half_bandwidth() + 1) as f64;

    for j in 0..cap.min(n) {
        m.mul_vec_into(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= a * vi;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= b * vi;
            }
        }
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        alpha.push(a);
        let b = norm(&w);
        if !a.is_finite() || !b.is_finite() {
            return Err(GridError::NoConvergence { iterations: j + 1 });
        }
        let (lo, hi) = tridiagonal_extremes(&alpha, &beta);
        let scale = lo.abs().max(hi.abs());
        if j + 1 == n || b <= f64::EPSILON * anorm * (n as f64).sqrt() {
            return Ok((lo, hi));
        }
        if j >= 1 {
            let r_lo = b * ritz_tail(&alpha, &beta, lo, scale);
            let r_hi = b * ritz_tail(&alpha, &beta, hi, scale);
            if r_lo.max(r_hi) <= tol * scale {
                return Ok((lo, hi));
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Err(GridError::NoConvergence { iterations: cap })
}

/// Largest absolute eigenvalue of a symmetric matrix, i.e. its induced 2-norm.
pub fn spectral_norm(m: &BandMatrix, tol: f64) -> Result<f64, GridError> {
    let (lo, hi) = extreme_eigenvalues(m, tol)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Induced 2-norm of an arbitrary band matrix: `sqrt(lambda_max(M^T M))`
/// unless `M` is diagonal or symmetric.
pub fn operator_norm(m: &BandMatrix, tol: f64) -> Result<f64, GridError> {
    if m.is_diagonal() {
        return Ok(m.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    }
    if m.is_symmetric() {
        return spectral_norm(m, tol);
    }
    let normal = m.transpose().matmul(m);
    // M^T M is symmetric up to rounding in the product; symmetrize exactly
    let sym = normal.lin_comb(0.5, &normal.transpose(), 0.5);
    Ok(spectral_norm(&sym, tol)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_and_zero() {
        assert_eq!(spectral_norm(&BandMatrix::identity(7), 1e-8).unwrap(), 1.0);
        assert_eq!(spectral_norm(&BandMatrix::zeros(5, 1), 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_stencil_closed_form() {
        for d in [4usize, 7, 15, 16, 31, 50, 63, 127] {
            let m = BandMatrix::toeplitz(d, &[-1.0, 2.0, -1.0]);
            let (lo, hi) = extreme_eigenvalues(&m, 1e-10).unwrap();
            let top = 2.0 - 2.0 * (d as f64 * PI / (d as f64 + 1.0)).cos();
            let bottom = 2.0 - 2.0 * (PI / (d as f64 + 1.0)).cos();
            assert!((hi - top).abs() / top < 1e-8, "d={d}: {hi} vs {top}");
            assert!((lo - bottom).abs() / top < 1e-8, "d={d}: {lo} vs {bottom}");
        }
    }

    #[test]
    fn nonsymmetric_rejected_by_spectral_norm() {
        let m = BandMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(
            spectral_norm(&m, 1e-8),
            Err(GridError::NotSymmetric)
        ));
        // singular values of [[1,2],[0,1]] are 1 +- sqrt(2)
        let s = operator_norm(&m, 1e-12).unwrap();
        assert!((s - (1.0 + 2f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn indefinite_symmetric() {
        let m = BandMatrix::toeplitz(20, &[1.0, 0.0, 1.0]);
        let top = 2.0 * (PI / 21.0).cos();
        assert!((spectral_norm(&m, 1e-10).unwrap() - top).abs() < 1e-8);
    }

    #[test]
    fn sturm_count_on_diagonal() {
        assert_eq!(sturm_count(&[1.0, 2.0, 3.0], &[0.0, 0.0], 2.5), 2);
    }
}
