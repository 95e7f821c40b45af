//! Small dense complex matrices.
//!
//! Everything in the link layer is at most a handful of rows and columns
//! (4 receive antennas, a few dozen transmit ports, up to 4 layers), so a
//! row-major `Vec` with naive loops beats a general-purpose library here.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");
        Self::from_fn(rows, cols, |r, c| columns[c][r])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in matmul");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = &self.data[r * self.cols..(r + 1) * self.cols];
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// `self^H * self`, exploiting the Hermitian result.
    pub fn gram(&self) -> CMatrix {
        let n = self.cols;
        let mut g = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Inverse of a Hermitian positive-definite matrix via Cholesky.
    ///
    /// Returns `None` when a pivot falls below `rel_tol` times the largest
    /// diagonal entry, i.e. the matrix is numerically singular.
    pub fn hpd_inverse(&self, rel_tol: f64) -> Option<CMatrix> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let scale = (0..n).map(|i| self[(i, i)].re).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        // Lower-triangular factor L with A = L L^H.
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if d <= rel_tol * scale {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = C64::new(d, 0.0);
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        // Invert L by forward substitution, then A^-1 = L^-H L^-1.
        let mut linv = CMatrix::zeros(n, n);
        for c in 0..n {
            for r in c..n {
                let mut s = if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                for k in c..r {
                    s -= l[(r, k)] * linv[(k, c)];
                }
                linv[(r, c)] = s / l[(r, r)];
            }
        }
        let mut inv = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for k in i.max(j)..n {
                    s += linv[(k, i)].conj() * linv[(k, j)];
                }
                inv[(i, j)] = s;
            }
        }
        Some(inv)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn matmul_and_adjoint() {
        let a = CMatrix::from_fn(2, 3, |r, col| c(r as f64, col as f64));
        let g = a.adjoint().matmul(&a);
        assert_eq!(g, a.gram());
        assert_eq!(a.adjoint().adjoint(), a);
    }

    #[test]
    fn hpd_inverse_recovers_identity() {
        let a = CMatrix::from_fn(4, 3, |r, col| c((r * 3 + col) as f64 * 0.37 - 1.0, (r as f64 - col as f64).sin()));
        let g = a.gram();
        let inv = g.hpd_inverse(1e-12).expect("full rank");
        let err = inv.matmul(&g).sub(&CMatrix::identity(3)).frobenius_norm();
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn singular_gram_is_rejected() {
        let col = vec![c(1.0, 0.5), c(-0.3, 2.0)];
        let a = CMatrix::from_columns(&[col.clone(), col]);
        assert!(a.gram().hpd_inverse(1e-12).is_none());
    }
}
