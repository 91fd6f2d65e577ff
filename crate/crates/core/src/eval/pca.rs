//! PCA via eigendecomposition of the sample covariance (cyclic Jacobi).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Eigenvalues below `RANK_TOL * largest` count as numerically zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows, largest-magnitude entry of each row positive.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Set when fewer than the requested components had non-zero variance.
    pub truncated: bool,
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Row `i` of the
/// returned matrix is the eigenvector of eigenvalue `i`.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ShapeMismatch(format!("eigendecomposition of a {}x{} matrix", n, a.cols())));
    }
    let mut m = a.clone();
    // columns of v are eigenvectors
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (row, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(row, k, v.get(k, i));
        }
    }
    Ok((values, vectors))
}

/// Fits `k` principal axes to the rows of `x`.
pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InvalidValue(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::InvalidValue(format!("k = {k} outside 1..={}", (n - 1).min(d))));
    }
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    crate::tensor::gemm_tn(d, n, d, centered.as_slice(), centered.as_slice(), cov.as_mut_slice(), 0.0);
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= (n - 1) as f64);
    // exact symmetry for the rotation sweeps
    for i in 0..d {
        for j in i + 1..d {
            let s = 0.5 * (cov.get(i, j) + cov.get(j, i));
            cov.set(i, j, s);
            cov.set(j, i, s);
        }
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let top = values[0].max(0.0);
    let rank = values.iter().take_while(|&&v| v > RANK_TOL * top && v > 0.0).count();
    let kept = k.min(rank.max(1));
    let mut components = Matrix::zeros(kept, d);
    for r in 0..kept {
        let row = vectors.row(r);
        let lead = row.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for (c, v) in components.row_mut(r).iter_mut().zip(row) {
            *c = sign * v;
        }
    }
    let explained_variance: Vec<f64> = values[..kept].iter().map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(PcaModel { mean, components, explained_variance, explained_variance_ratio, truncated: kept < k })
}

/// Scores `(x − mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    let d = model.mean.len();
    if x.cols() != d {
        return Err(Error::ShapeMismatch(format!("PCA fitted on {d} columns, got {}", x.cols())));
    }
    let mut centered = x.clone();
    for i in 0..x.rows() {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    let k = model.components.rows();
    let mut out = Matrix::zeros(x.rows(), k);
    crate::tensor::gemm_nt(x.rows(), d, k, centered.as_slice(), model.components.as_slice(), out.as_mut_slice(), 0.0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_points() {
        let x = Matrix::from_rows(&[[-1.0, 0.0], [1.0, 0.0], [2.0, 0.0], [-2.0, 0.0]]).unwrap();
        let m = pca_fit(&x, 1).unwrap();
        assert_eq!(m.components.row(0), &[1.0, 0.0]);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        // Asking for the second axis of rank-1 data truncates.
        let m2 = pca_fit(&x, 2).unwrap();
        assert!(m2.truncated);
        assert_eq!(m2.components.rows(), 1);
    }

    #[test]
    fn centering_removes_offsets() {
        let x = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.5, -1.0], [3.0, 2.0, 0.0], [-1.0, 0.0, 1.0]]).unwrap();
        let mut shifted = x.clone();
        shifted.as_mut_slice().chunks_exact_mut(3).for_each(|r| {
            r[0] += 10.0;
            r[1] -= 4.0;
            r[2] += 0.5;
        });
        let a = pca_fit(&x, 2).unwrap();
        let b = pca_fit(&shifted, 2).unwrap();
        for (u, v) in a.components.as_slice().iter().zip(b.components.as_slice()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn argument_checks() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(pca_fit(&x, 1).is_err());
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0], [3.0, 3.0]]).unwrap();
        assert!(pca_fit(&x, 3).is_err());
        assert!(pca_fit(&x, 0).is_err());
        let m = pca_fit(&x, 2).unwrap();
        assert!(pca_transform(&m, &Matrix::zeros(1, 3)).is_err());
    }
}
