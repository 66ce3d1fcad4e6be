//! Square band matrices with symmetric half-bandwidth.
//!
//! Row `i` stores the `2k + 1` entries of columns `i - k ..= i + k`; slots
//! that fall outside the matrix are kept at zero and never read.

use std::fmt;

/// Square matrix whose nonzeros satisfy `|i - j| <= k`.
#[derive(Clone, PartialEq)]
pub struct BandMatrix {
    dim: usize,
    k: usize,
    data: Vec<f64>,
}

impl fmt::Debug for BandMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BandMatrix")
            .field("dim", &self.dim)
            .field("half_bandwidth", &self.k)
            .finish()
    }
}

impl BandMatrix {
    pub fn zeros(dim: usize, half_bandwidth: usize) -> Self {
        let k = half_bandwidth.min(dim.saturating_sub(1));
        Self {
            dim,
            k,
            data: vec![0.0; dim * (2 * k + 1)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0);
        m.data.copy_from_slice(diag);
        m
    }

    /// Tridiagonal/pentadiagonal/... Toeplitz matrix from the stencil
    /// `(c_{-k}, ..., c_0, ..., c_k)`, truncated at the matrix edges.
    pub fn toeplitz(dim: usize, stencil: &[f64]) -> Self {
        assert!(stencil.len() % 2 == 1, "stencil length must be odd");
        let k = stencil.len() / 2;
        let mut m = Self::zeros(dim, k);
        let k = m.k;
        let centre = stencil.len() / 2;
        for i in 0..dim {
            for j in i.saturating_sub(k)..=(i + k).min(dim - 1) {
                let off = j as isize - i as isize;
                m.set(i, j, stencil[(centre as isize + off) as usize]);
            }
        }
        m
    }

    /// Builds a band matrix from dense rows, detecting the half-bandwidth.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut k = 0;
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "dense matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    k = k.max(i.abs_diff(j));
                }
            }
        }
        let mut m = Self::zeros(dim, k);
        for (i, row) in rows.iter().enumerate() {
            for j in m.col_range(i) {
                m.set(i, j, row[j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_bandwidth(&self) -> usize {
        self.k
    }

    /// Raw band storage, `(2k + 1) * dim` values, row-major.
    pub fn bands(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.dim || j >= self.dim || i.abs_diff(j) > self.k {
            None
        } else {
            Some(i * (2 * self.k + 1) + j + self.k - i)
        }
    }

    /// Columns that may hold nonzeros in row `i`.
    #[inline]
    pub fn col_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.k)..=(i + self.k).min(self.dim - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside band k={}", self.k));
        self.data[s] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside band k={}", self.k));
        self.data[s] += v;
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        let w = 2 * self.k + 1;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in self.col_range(i) {
                acc += row[j + self.k - i] * x[j];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim, self.k);
        for i in 0..self.dim {
            for j in self.col_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Exact entrywise symmetry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.col_range(i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            k: self.k,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Returns `a * self + b * other` with the wider of the two bandwidths.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Self::zeros(self.dim, self.k.max(other.k));
        for i in 0..self.dim {
            for j in self.col_range(i) {
                out.add_at(i, j, a * self.get(i, j));
            }
            for j in other.col_range(i) {
                out.add_at(i, j, b * other.get(i, j));
            }
        }
        out
    }

    /// `I + c * self`.
    pub fn identity_plus(&self, c: f64) -> Self {
        let mut out = self.scaled(c);
        for i in 0..self.dim {
            out.add_at(i, i, 1.0);
        }
        out
    }

    /// Matrix product; the result has half-bandwidth `k1 + k2`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Self::zeros(self.dim, self.k + other.k);
        for i in 0..self.dim {
            for l in self.col_range(i) {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in other.col_range(l) {
                    out.add_at(i, j, a * other.get(l, j));
                }
            }
        }
        out
    }

    /// Multiplies column `j` by `d[j]`, i.e. `self * diag(d)`.
    pub fn mul_diag_right(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.dim);
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in self.col_range(i) {
                let s = out.slot(i, j).unwrap();
                out.data[s] *= d[j];
            }
        }
        out
    }

    /// Interleaves `nc` equally sized blocks into one matrix of order
    /// `nc * dim`: entry `(i, j)` of block `c` lands at `(nc*i + c, nc*j + c)`.
    pub fn interleave_blocks(blocks: &[&Self]) -> Self {
        let nc = blocks.len();
        assert!(nc > 0);
        let dim = blocks[0].dim;
        let k = blocks.iter().map(|b| b.k).max().unwrap();
        let mut out = Self::zeros(nc * dim, nc * k);
        for (c, b) in blocks.iter().enumerate() {
            assert_eq!(b.dim, dim, "blocks must share a dimension");
            for i in 0..dim {
                for j in b.col_range(i) {
                    out.set(nc * i + c, nc * j + c, b.get(i, j));
                }
            }
        }
        out
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| self.col_range(i).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}
