//! Uniform 1D grids, finite-difference operators with homogeneous Dirichlet
//! boundaries, and the banded linear algebra behind them.
//!
//! A grid built from `n_points` nodes has spacing `dx = (x_right - x_left) / n_points`
//! and nodes `x_i = x_left + i dx`, `i = 0..n_points`. The boundary values
//! `u(x_left) = u(x_right) = 0` are eliminated, leaving the `n_points - 1`
//! unknowns at `x_1, ..., x_{n_points - 1}`; `x_right` itself is one spacing
//! past the last node.

mod band;
mod eigen;
mod lu;

pub use band::BandMatrix;
pub use eigen::{extreme_eigenvalues, operator_norm, spectral_norm, DEFAULT_NORM_TOL};
pub use lu::{solve_banded, BandLu, PIVOT_RTOL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid domain [{x_left}, {x_right}] with {n_points} points (need x_right > x_left and at least 4 points)")]
    InvalidDomain {
        x_left: f64,
        x_right: f64,
        n_points: usize,
    },
    #[error("grid too small: {unknowns} unknowns, need at least {required}")]
    GridTooSmall { unknowns: usize, required: usize },
    #[error("singular matrix: pivot vanished in column {row}")]
    SingularMatrix { row: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("eigenvalue iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_left: f64,
    pub x_right: f64,
    pub n_points: usize,
    pub dx: f64,
}

/// Uniform partition of `[x_left, x_right]` into `n_points` cells.
pub fn build_grid(x_left: f64, x_right: f64, n_points: usize) -> Result<GridSpec, GridError> {
    if !(x_left.is_finite() && x_right.is_finite() && x_right > x_left) || n_points < MIN_POINTS {
        return Err(GridError::InvalidDomain {
            x_left,
            x_right,
            n_points,
        });
    }
    Ok(GridSpec {
        x_left,
        x_right,
        n_points,
        dx: (x_right - x_left) / n_points as f64,
    })
}

impl GridSpec {
    pub fn new(x_left: f64, x_right: f64, n_points: usize) -> Result<Self, GridError> {
        build_grid(x_left, x_right, n_points)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_left + i as f64 * self.dx
    }

    /// All `n_points` nodes, boundary node `x_0` included.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_points - 1
    }

    /// Nodes carrying unknowns: `x_1 .. x_{n_points - 1}`.
    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.interior_nodes().into_iter().map(f).collect()
    }

    /// Position of `x` rescaled to `[0, 1]`.
    pub fn unit(&self, x: f64) -> f64 {
        (x - self.x_left) / (self.x_right - self.x_left)
    }
}

/// `A = B / dx^2` with `B = tridiag(-1, 2, -1)` on the unknowns; symmetric
/// positive definite.
pub fn assemble_neg_laplacian(grid: &GridSpec) -> BandMatrix {
    let h2 = grid.dx * grid.dx;
    BandMatrix::toeplitz(grid.n_unknowns(), &[-1.0 / h2, 2.0 / h2, -1.0 / h2])
}

/// Discrete bilaplacian, defined as the square of the Dirichlet Laplacian
/// (`u = 0` and `u'' = 0` at the boundary). Interior rows carry the stencil
/// `(1, -4, 6, -4, 1) / dx^4`.
pub fn assemble_biharmonic(grid: &GridSpec) -> Result<BandMatrix, GridError> {
    if grid.n_unknowns() < 5 {
        return Err(GridError::GridTooSmall {
            unknowns: grid.n_unknowns(),
            required: 5,
        });
    }
    let l = assemble_neg_laplacian(grid);
    Ok(l.matmul(&l))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.dx, 0.25);
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(build_grid(-1.0, 1.0, 8).unwrap().dx, 0.25);
        assert!(matches!(
            build_grid(0.0, 1.0, 2),
            Err(GridError::InvalidDomain { .. })
        ));
        assert!(build_grid(1.0, 1.0, 8).is_err());
        assert!(build_grid(0.0, f64::NAN, 8).is_err());
    }

    #[test]
    fn spacing_times_points_spans_domain() {
        for n in [4, 7, 16, 33, 100] {
            let g = build_grid(-0.3, 2.9, n).unwrap();
            let span = g.x_right - g.x_left;
            assert!((g.dx * n as f64 - span).abs() <= 2.0 * f64::EPSILON * span);
        }
    }

    #[test]
    fn neg_laplacian_small_grid() {
        let g = build_grid(0.0, 1.0, 4).unwrap();
        let a = assemble_neg_laplacian(&g);
        assert_eq!(
            a.to_dense(),
            vec![
                vec![32.0, -16.0, 0.0],
                vec![-16.0, 32.0, -16.0],
                vec![0.0, -16.0, 32.0]
            ]
        );
        assert!(a.is_symmetric());
    }

    #[test]
    fn neg_laplacian_of_quadratic_is_constant() {
        let g = build_grid(0.0, 1.0, 32).unwrap();
        let a = assemble_neg_laplacian(&g);
        let u = g.sample(|x| x * x);
        let au = a.mul_vec(&u);
        // -(x^2)'' = -2 wherever the stencil avoids the boundary
        for v in &au[1..au.len() - 1] {
            assert!((v + 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn neg_laplacian_annihilates_linear() {
        let g = build_grid(0.0, 2.0, 10).unwrap();
        let a = assemble_neg_laplacian(&g);
        let au = a.mul_vec(&g.sample(|x| 3.0 * x - 1.0));
        for v in &au[1..au.len() - 1] {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn biharmonic_is_square_with_standard_stencil() {
        let g = build_grid(0.0, 1.0, 12).unwrap();
        let l = assemble_neg_laplacian(&g);
        let b = assemble_biharmonic(&g).unwrap();
        assert_eq!(b, l.matmul(&l));
        assert!(b.is_symmetric());
        let h4 = g.dx.powi(4);
        let row: Vec<f64> = (3..8).map(|j| b.get(5, j) * h4).collect();
        for (got, want) in row.iter().zip([1.0, -4.0, 6.0, -4.0, 1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(matches!(
            assemble_biharmonic(&build_grid(0.0, 1.0, 5).unwrap()),
            Err(GridError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn neg_laplacian_is_positive_definite() {
        for n in [4, 9, 32] {
            let a = assemble_neg_laplacian(&build_grid(0.0, 1.0, n).unwrap());
            let (lo, _) = extreme_eigenvalues(&a, 1e-10).unwrap();
            assert!(lo > 0.0);
        }
    }
}
