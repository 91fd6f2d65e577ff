use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::Parameterized;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{add_col_sums, add_row_bias, gemm_nn, gemm_nt, gemm_tn, Matrix};
use crate::types::{normalize_rows, ClassLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl ProjectionConfig {
    pub fn new(in_dim: usize) -> Self {
        Self { in_dim, out_dim: 96 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim < 2 {
            return Err(Error::InvalidConfig {
                field: "projection.out_dim".into(),
                reason: format!("need in_dim >= 1 and out_dim >= 2, got {}x{}", self.in_dim, self.out_dim),
            });
        }
        Ok(())
    }
}

/// Bias-free linear map followed by row L2 normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    config: ProjectionConfig,
    params: ParamStore,
}

/// What [`ProjectionHead::backward`] needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ProjectionTrace {
    input: Matrix,
    pre_norm_len: Vec<f64>,
    output: Matrix,
}

impl ProjectionHead {
    fn with_zeros(config: ProjectionConfig) -> Result<(Self, core::ops::Range<usize>)> {
        config.validate()?;
        let mut params = ParamStore::empty();
        let w = params.add("weight", &[config.in_dim, config.out_dim]);
        Ok((Self { config, params }, w))
    }

    pub fn new(config: ProjectionConfig, seed: u64) -> Result<Self> {
        let (mut head, w) = Self::with_zeros(config)?;
        let mut rng = rng::derive_stream(seed, rng::streams::INIT_HEADS);
        head.params.fill_xavier(&w, config.in_dim, config.out_dim, &mut rng);
        Ok(head)
    }

    /// Square identity map.
    pub fn identity(dim: usize) -> Result<Self> {
        let (mut head, _) = Self::with_zeros(ProjectionConfig { in_dim: dim, out_dim: dim })?;
        for i in 0..dim {
            head.params.data_mut()[i * dim + i] = 1.0;
        }
        Ok(head)
    }

    pub fn config(&self) -> &ProjectionConfig {
        &self.config
    }

    fn check(&self, r: &Matrix) -> Result<()> {
        if r.cols() != self.config.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "projection expects {} columns, got {}",
                self.config.in_dim,
                r.cols()
            )));
        }
        Ok(())
    }

    /// Unit-norm projections, one row per representation.
    pub fn project(&self, r: &Matrix) -> Result<Matrix> {
        self.forward_train(r).map(|(z, _)| z)
    }

    pub fn forward_train(&self, r: &Matrix) -> Result<(Matrix, ProjectionTrace)> {
        self.check(r)?;
        let (n, d_in, d_out) = (r.rows(), self.config.in_dim, self.config.out_dim);
        let mut y = Matrix::zeros(n, d_out);
        gemm_nn(n, d_in, d_out, r.as_slice(), self.params.data(), y.as_mut_slice(), 0.0);
        let z = normalize_rows(&y)?;
        let pre_norm_len = y
            .iter_rows()
            .map(|row| libm::sqrt(row.iter().map(|v| v * v).sum::<f64>()))
            .collect();
        let trace = ProjectionTrace { input: r.clone(), pre_norm_len, output: z.clone() };
        Ok((z, trace))
    }

    /// Returns (weight gradient, dL/dr).
    pub fn backward(&self, trace: &ProjectionTrace, dz: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let (n, d_in, d_out) = (trace.input.rows(), self.config.in_dim, self.config.out_dim);
        if dz.shape() != (n, d_out) {
            return Err(Error::ShapeMismatch(format!("projection gradient {:?}, expected ({n}, {d_out})", dz.shape())));
        }
        // dy = (dz − z (z·dz)) / |y|
        let mut dy = Matrix::zeros(n, d_out);
        for i in 0..n {
            let z = trace.output.row(i);
            let g = dz.row(i);
            let zg: f64 = z.iter().zip(g).map(|(a, b)| a * b).sum();
            let len = trace.pre_norm_len[i];
            for (k, out) in dy.row_mut(i).iter_mut().enumerate() {
                *out = (g[k] - z[k] * zg) / len;
            }
        }
        let mut dw = self.params.zeros_like();
        gemm_tn(d_in, n, d_out, trace.input.as_slice(), dy.as_slice(), &mut dw, 0.0);
        let mut dr = Matrix::zeros(n, d_in);
        gemm_nt(n, d_out, d_in, dy.as_slice(), self.params.data(), dr.as_mut_slice(), 0.0);
        Ok((dw, dr))
    }
}

impl Parameterized for ProjectionHead {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub in_dim: usize,
    pub n_classes: usize,
}

impl ClassifierConfig {
    pub fn new(in_dim: usize) -> Self {
        Self { in_dim, n_classes: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes != 2 || self.in_dim == 0 {
            return Err(Error::InvalidConfig {
                field: "classifier.n_classes".into(),
                reason: format!("binary classifier over >= 1 inputs required, got {}x{}", self.in_dim, self.n_classes),
            });
        }
        Ok(())
    }
}

/// Affine map to two logits. Ties predict benign.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    config: ClassifierConfig,
    params: ParamStore,
    w: core::ops::Range<usize>,
    b: core::ops::Range<usize>,
}

impl LinearClassifier {
    pub fn zeros(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::empty();
        let w = params.add("weight", &[config.in_dim, config.n_classes]);
        let b = params.add("bias", &[config.n_classes]);
        Ok(Self { config, params, w, b })
    }

    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        let mut c = Self::zeros(config)?;
        let mut rng = rng::derive_stream(seed, rng::streams::INIT_HEADS + 100);
        let w = c.w.clone();
        c.params.fill_xavier(&w, config.in_dim, config.n_classes, &mut rng);
        Ok(c)
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn set_bias(&mut self, bias: [f64; 2]) {
        let b = self.b.clone();
        self.params.data_mut()[b].copy_from_slice(&bias);
    }

    pub fn logits(&self, r: &Matrix) -> Result<Matrix> {
        if r.cols() != self.config.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "classifier expects {} columns, got {}",
                self.config.in_dim,
                r.cols()
            )));
        }
        let (n, k) = (r.rows(), self.config.n_classes);
        let mut out = Matrix::zeros(n, k);
        gemm_nn(n, self.config.in_dim, k, r.as_slice(), &self.params.data()[self.w.clone()], out.as_mut_slice(), 0.0);
        add_row_bias(out.as_mut_slice(), &self.params.data()[self.b.clone()]);
        Ok(out)
    }

    /// Argmax of each logit row; equal logits go to class 0.
    pub fn predict_from_logits(logits: &Matrix) -> Vec<ClassLabel> {
        logits
            .iter_rows()
            .map(|row| if row[1] > row[0] { ClassLabel::Malignant } else { ClassLabel::Benign })
            .collect()
    }

    pub fn predict(&self, r: &Matrix) -> Result<Vec<ClassLabel>> {
        self.logits(r).map(|l| Self::predict_from_logits(&l))
    }

    /// Returns (parameter gradient, dL/dr).
    pub fn backward(&self, r: &Matrix, dlogits: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let (n, d, k) = (r.rows(), self.config.in_dim, self.config.n_classes);
        if dlogits.shape() != (n, k) {
            return Err(Error::ShapeMismatch(format!("logit gradient {:?}, expected ({n}, {k})", dlogits.shape())));
        }
        let mut grads = self.params.zeros_like();
        gemm_tn(d, n, k, r.as_slice(), dlogits.as_slice(), &mut grads[self.w.clone()], 0.0);
        add_col_sums(n, k, dlogits.as_slice(), &mut grads[self.b.clone()]);
        let mut dr = Matrix::zeros(n, d);
        gemm_nt(n, k, d, dlogits.as_slice(), &self.params.data()[self.w.clone()], dr.as_mut_slice(), 0.0);
        Ok((grads, dr))
    }
}

impl Parameterized for LinearClassifier {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::new(n, d, (0..n * d).map(|_| rng::normal(&mut r)).collect()).unwrap()
    }

    #[test]
    fn identity_projection_keeps_unit_rows() {
        let x = normalize_rows(&random(5, 4, 1)).unwrap();
        let head = ProjectionHead::identity(4).unwrap();
        let z = head.project(&x).unwrap();
        for (a, b) in z.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_matches_explicit_loops() {
        let head = ProjectionHead::new(ProjectionConfig { in_dim: 6, out_dim: 5 }, 3).unwrap();
        let r = random(4, 6, 2);
        let z = head.project(&r).unwrap();
        let w = head.params().data();
        for i in 0..4 {
            let mut y = vec![0.0; 5];
            for (k, yk) in y.iter_mut().enumerate() {
                for j in 0..6 {
                    *yk += r.get(i, j) * w[j * 5 + k];
                }
            }
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            for k in 0..5 {
                assert!((z.get(i, k) - y[k] / norm).abs() < 1e-10);
            }
            let row_norm = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((row_norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn projection_rejects_wrong_width() {
        let head = ProjectionHead::new(ProjectionConfig::new(8), 0).unwrap();
        assert!(head.project(&random(2, 7, 0)).is_err());
        assert_eq!(head.config().out_dim, 96);
        assert!(ProjectionConfig { in_dim: 8, out_dim: 1 }.validate().is_err());
    }

    #[test]
    fn zero_classifier_predicts_benign() {
        let c = LinearClassifier::zeros(ClassifierConfig::new(3)).unwrap();
        let r = random(4, 3, 5);
        let logits = c.logits(&r).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
        assert!(c.predict(&r).unwrap().iter().all(|&l| l == ClassLabel::Benign));
    }

    #[test]
    fn bias_toward_malignant() {
        let mut c = LinearClassifier::zeros(ClassifierConfig::new(3)).unwrap();
        c.set_bias([0.0, 10.0]);
        assert!(c.predict(&random(4, 3, 6)).unwrap().iter().all(|&l| l == ClassLabel::Malignant));
    }

    #[test]
    fn classifier_matches_affine_oracle() {
        let c = LinearClassifier::new(ClassifierConfig::new(5), 9).unwrap();
        let mut c = c;
        c.set_bias([0.3, -0.2]);
        let r = random(6, 5, 7);
        let logits = c.logits(&r).unwrap();
        let w = c.params().get("weight").unwrap();
        let b = c.params().get("bias").unwrap();
        for i in 0..6 {
            for k in 0..2 {
                let mut v = b[k];
                for j in 0..5 {
                    v += r.get(i, j) * w[j * 2 + k];
                }
                assert!((logits.get(i, k) - v).abs() < 1e-10);
            }
        }
        assert!(c.logits(&random(2, 4, 0)).is_err());
        assert!(ClassifierConfig { in_dim: 4, n_classes: 3 }.validate().is_err());
    }
}
