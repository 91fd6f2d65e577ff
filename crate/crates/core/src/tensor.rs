//! Dense row-major `f64` matrices and the handful of products the model needs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-column matrix has no data anyway.
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm_nn(self.rows, self.cols, other.cols, &self.data, &other.data, &mut out.data, 0.0);
        Ok(out)
    }
}

/// `c = a · b + beta · c` for row-major `a` (m×k), `b` (k×n), `c` (m×n).
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm_strided(m, k, n, a, k as isize, 1, b, n as isize, 1, c, n as isize, 1, beta);
}

/// `c = aᵀ · b + beta · c` where `a` is stored row-major as k×m.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm_strided(m, k, n, a, 1, m as isize, b, n as isize, 1, c, n as isize, 1, beta);
}

/// `c = a · bᵀ + beta · c` where `b` is stored row-major as n×k.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm_strided(m, k, n, a, k as isize, 1, b, 1, k as isize, c, n as isize, 1, beta);
}

/// General strided product `c = a · b + beta · c` (all strides in elements).
///
/// Bounds are checked against the largest index each operand can touch, so
/// the unsafe call below never reads or writes outside the slices.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let at = i as isize * rsc + j as isize * csc;
                c[at as usize] *= beta;
            }
        }
        return;
    }
    let extent = |r: usize, cdim: usize, rs: isize, cs: isize| {
        assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
        (r - 1) * rs as usize + (cdim - 1) * cs as usize
    };
    assert!(extent(m, k, rsa, csa) < a.len(), "lhs operand out of bounds");
    assert!(extent(k, n, rsb, csb) < b.len(), "rhs operand out of bounds");
    assert!(extent(m, n, rsc, csc) < c.len(), "output out of bounds");
    // SAFETY: every element addressed by (rows, cols, strides) lies inside the
    // slices (checked above) and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Adds the column sums of a row-major m×n matrix into `out` (length n).
pub fn add_col_sums(m: usize, n: usize, a: &[f64], out: &mut [f64]) {
    for row in a.chunks_exact(n).take(m) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Adds a bias row to every row of a row-major matrix.
pub fn add_row_bias(a: &mut [f64], bias: &[f64]) {
    for row in a.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn filled(r: usize, c: usize, seed: f64) -> Matrix {
        let data = (0..r * c).map(|i| ((i as f64 + seed) * 0.37).sin()).collect();
        Matrix::new(r, c, data).unwrap()
    }

    #[test]
    fn products_match_naive_loops() {
        let a = filled(5, 7, 0.1);
        let b = filled(7, 3, 1.3);
        let expect = naive(&a, &b);
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        let at = a.transpose();
        let mut c = vec![0.0; 15];
        gemm_tn(5, 7, 3, at.as_slice(), b.as_slice(), &mut c, 0.0);
        for (x, y) in c.iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        let bt = b.transpose();
        let mut c = vec![1.0; 15];
        gemm_nt(5, 7, 3, a.as_slice(), bt.as_slice(), &mut c, 1.0);
        for (x, y) in c.iter().zip(expect.as_slice()) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(filled(2, 3, 0.0).matmul(&filled(2, 3, 0.0)).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
