//! Banded LU factorization with partial pivoting.
//!
//! Row interchanges are confined to the `k` rows below the pivot, so the
//! upper factor fills in up to `2k` superdiagonals; each row of the working
//! storage therefore spans `3k + 1` columns (`i - k ..= i + 2k`).

use super::{BandMatrix, GridError};

/// Pivots with magnitude at or below `PIVOT_RTOL * max|a_ij|` are treated as zero.
pub const PIVOT_RTOL: f64 = f64::EPSILON;

/// Factored form `P A = L U` of a band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    k: usize,
    // row i, column c at u[i * (3k + 1) + c + k - i]
    u: Vec<f64>,
    // multipliers l(j + r, j) at l[j * k + r - 1], r = 1..=k
    l: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn factor(m: &BandMatrix) -> Result<Self, GridError> {
        Self::factor_with_tol(m, PIVOT_RTOL)
    }

    pub fn factor_with_tol(m: &BandMatrix, pivot_rtol: f64) -> Result<Self, GridError> {
        let n = m.dim();
        let k = m.half_bandwidth();
        let w = 3 * k + 1;
        let mut u = vec![0.0; n * w];
        for i in 0..n {
            for j in m.col_range(i) {
                u[i * w + j + k - i] = m.get(i, j);
            }
        }
        let floor = pivot_rtol * m.max_abs();
        let at = |i: usize, c: usize| i * w + c + k - i;
        let mut l = vec![0.0; n * k];
        let mut piv = vec![0; n];

        for j in 0..n {
            let last = (j + k).min(n - 1);
            let mut p = j;
            let mut best = u[at(j, j)].abs();
            for i in j + 1..=last {
                let v = u[at(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > floor) {
                return Err(GridError::SingularMatrix { row: j });
            }
            piv[j] = p;
            let cmax = (j + 2 * k).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    // row p only reaches column p + k <= j + 2k
                    let (a, b) = (at(j, c), at(p, c));
                    u.swap(a, b);
                }
            }
            let pivot = u[at(j, j)];
            for i in j + 1..=last {
                let f = u[at(i, j)] / pivot;
                l[j * k + i - j - 1] = f;
                u[at(i, j)] = 0.0;
                if f != 0.0 {
                    for c in j + 1..=cmax {
                        u[at(i, c)] -= f * u[at(j, c)];
                    }
                }
            }
        }
        Ok(Self { n, k, u, l, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let (n, k) = (self.n, self.k);
        let w = 3 * k + 1;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let end = (j + k).min(n - 1);
                let col = &self.l[j * k..j * k + end - j];
                for (bi, lij) in b[j + 1..=end].iter_mut().zip(col) {
                    *bi -= lij * bj;
                }
            }
        }
        for i in (0..n).rev() {
            let row = &self.u[i * w..(i + 1) * w];
            let mut acc = b[i];
            for c in i + 1..=(i + 2 * k).min(n - 1) {
                acc -= row[c + k - i] * b[c];
            }
            b[i] = acc / row[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves `m x = rhs` by banded LU with partial pivoting.
pub fn solve_banded(m: &BandMatrix, rhs: &[f64]) -> Result<Vec<f64>, GridError> {
    if rhs.len() != m.dim() {
        return Err(GridError::DimensionMismatch {
            expected: m.dim(),
            found: rhs.len(),
        });
    }
    Ok(BandLu::factor(m)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(solve_banded(&BandMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn tridiagonal_constructed_solution() {
        let a = BandMatrix::toeplitz(20, &[-1.0, 2.0, -1.0]);
        let ones = vec![1.0; 20];
        let x = solve_banded(&a, &a.mul_vec(&ones)).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_banded_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, k) = (50, 3);
        let mut b = BandMatrix::zeros(n, k);
        for i in 0..n {
            for j in b.col_range(i) {
                b.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        // B^T B + I is SPD with half-bandwidth 2k
        let a = b
            .transpose()
            .matmul(&b)
            .lin_comb(1.0, &BandMatrix::identity(n), 1.0);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve_banded(&a, &rhs).unwrap();
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&rhs).map(|(p, q)| p - q).collect();
        assert!(norm(&r) / norm(&rhs) <= 1e-10);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row swap
        let a = BandMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = solve_banded(&a, &[3.0, 4.0]).unwrap();
        assert_eq!(x, vec![4.0, 3.0]);
    }

    #[test]
    fn nonsymmetric_band_with_fill_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let mut a = BandMatrix::zeros(n, 2);
        for i in 0..n {
            for j in a.col_range(i) {
                // weak diagonal forces pivoting
                let v = if i == j {
                    0.01
                } else {
                    rng.random_range(-1.0..1.0)
                };
                a.set(i, j, v);
            }
        }
        let want: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_banded(&a, &a.mul_vec(&want)).unwrap();
        for (p, q) in x.iter().zip(&want) {
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = BandMatrix::zeros(4, 1);
        assert!(matches!(
            solve_banded(&a, &[0.0; 4]),
            Err(GridError::SingularMatrix { .. })
        ));
        let a = BandMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(
            BandLu::factor(&a),
            Err(GridError::SingularMatrix { row: 1 })
        ));
    }

    #[test]
    fn rhs_length_checked() {
        let a = BandMatrix::identity(3);
        assert!(matches!(
            solve_banded(&a, &[1.0]),
            Err(GridError::DimensionMismatch { .. })
        ));
    }
}
