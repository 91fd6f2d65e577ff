//! Supervised contrastive loss and cross-entropy.
//!
//! For a batch of unit vectors `z` with labels, anchor `i` has positives
//! `P(i)` (other rows with the same label) and contrast set `A(i)` (every row
//! except `i`). With `s_ij = z_i·z_j / τ`:
//!
//! * [`LossVariant::AsPrinted`]: `L = Σ_i −log( mean_{p∈P(i)} e^{s_ip} / Σ_{a∈A(i)} e^{s_ia} )`
//! * [`LossVariant::KhoslaOut`]: `L = Σ_i −mean_{p∈P(i)} log( e^{s_ip} / Σ_{a∈A(i)} e^{s_ia} )`
//!
//! Anchors with an empty `P(i)` contribute nothing. The loss is a sum over
//! anchors, not a mean.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::types::{pairwise_dot, ClassLabel};

/// Batch rows must have unit norm within this tolerance.
pub const UNIT_ROW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// Log of the mean positive ratio.
    AsPrinted,
    /// Mean of the per-positive log ratios.
    KhoslaOut,
}

impl LossVariant {
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::AsPrinted => "as-printed",
            LossVariant::KhoslaOut => "khosla-out",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "as-printed" => Ok(LossVariant::AsPrinted),
            "khosla-out" => Ok(LossVariant::KhoslaOut),
            other => Err(Error::InvalidValue(format!("unknown loss variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub temperature: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.03, variant: LossVariant::AsPrinted }
    }
}

impl LossConfig {
    pub fn new(temperature: f64, variant: LossVariant) -> Self {
        Self { temperature, variant }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig {
                field: "loss.temperature".into(),
                reason: format!("must be > 0, got {}", self.temperature),
            });
        }
        Ok(())
    }
}

/// Unit-norm projections with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    z: Matrix,
    labels: Vec<ClassLabel>,
}

impl ContrastiveBatch {
    /// General batch: at least two unit rows, one label each.
    pub fn new(z: Matrix, labels: Vec<ClassLabel>) -> Result<Self> {
        if z.rows() != labels.len() {
            return Err(Error::LengthMismatch { left: z.rows(), right: labels.len() });
        }
        if z.rows() < 2 {
            return Err(Error::ShapeMismatch(format!("contrastive batch needs >= 2 rows, got {}", z.rows())));
        }
        for (i, row) in z.iter_rows().enumerate() {
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            if !((norm - 1.0).abs() <= UNIT_ROW_TOL) {
                return Err(Error::NonUnitRows { row: i, norm });
            }
        }
        Ok(Self { z, labels })
    }

    /// Two-view batch: rows `2k` and `2k + 1` are views of sample `k` and
    /// share `sample_labels[k]`.
    pub fn from_views(z: Matrix, sample_labels: &[ClassLabel]) -> Result<Self> {
        if z.rows() != 2 * sample_labels.len() {
            return Err(Error::LengthMismatch { left: z.rows(), right: 2 * sample_labels.len() });
        }
        let labels = sample_labels.iter().flat_map(|&l| [l, l]).collect();
        Self::new(z, labels)
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    /// dL/dz, same shape as the batch.
    pub grad: Matrix,
    /// Number of anchors that had at least one positive.
    pub anchors_used: usize,
}

pub fn supcon_loss(batch: &ContrastiveBatch, cfg: &LossConfig) -> Result<f64> {
    supcon_loss_with_grad(batch, cfg).map(|o| o.loss)
}

pub fn supcon_loss_with_grad(batch: &ContrastiveBatch, cfg: &LossConfig) -> Result<LossAndGrad> {
    supcon_loss_unchecked(&batch.z, &batch.labels, cfg)
}

/// The vectorised loss and its gradient for arbitrary rows.
///
/// Skips the unit-norm check so finite-difference probes can nudge single
/// coordinates; training goes through [`ContrastiveBatch`].
pub fn supcon_loss_unchecked(z: &Matrix, labels: &[ClassLabel], cfg: &LossConfig) -> Result<LossAndGrad> {
    cfg.validate()?;
    let n = z.rows();
    if n != labels.len() {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    let inv_t = 1.0 / cfg.temperature;
    let mut sim = pairwise_dot(z);
    sim.as_mut_slice().iter_mut().for_each(|v| *v *= inv_t);

    // dL/ds_ij, zero on the diagonal.
    let mut dsim = Matrix::zeros(n, n);
    let mut loss = 0.0;
    let mut anchors_used = 0;
    let mut exps = vec![0.0; n];
    let mut pos_exps = vec![0.0; n];
    for i in 0..n {
        let n_pos = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if n_pos == 0 {
            continue;
        }
        anchors_used += 1;
        let row = sim.row(i);
        let max = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        // The positive set gets its own shift: its terms can all underflow
        // relative to the contrast-set maximum at small temperatures.
        let pos_max = (0..n).filter(|&j| j != i && labels[j] == labels[i]).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        let mut numer = 0.0;
        let mut pos_logit_sum = 0.0;
        for j in 0..n {
            if j == i {
                exps[j] = 0.0;
                pos_exps[j] = 0.0;
                continue;
            }
            let e = libm::exp(row[j] - max);
            exps[j] = e;
            denom += e;
            if labels[j] == labels[i] {
                let ep = libm::exp(row[j] - pos_max);
                pos_exps[j] = ep;
                numer += ep;
                pos_logit_sum += row[j] - max;
            }
        }
        let log_denom = libm::log(denom);
        let np = n_pos as f64;
        let drow = dsim.row_mut(i);
        match cfg.variant {
            LossVariant::AsPrinted => {
                loss += log_denom + max - pos_max - libm::log(numer) + libm::log(np);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let mut g = exps[j] / denom;
                    if labels[j] == labels[i] {
                        g -= pos_exps[j] / numer;
                    }
                    drow[j] = g;
                }
            }
            LossVariant::KhoslaOut => {
                loss += log_denom - pos_logit_sum / np;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let mut g = exps[j] / denom;
                    if labels[j] == labels[i] {
                        g -= 1.0 / np;
                    }
                    drow[j] = g;
                }
            }
        }
    }
    if anchors_used == 0 {
        return Err(Error::NoPositives(describe_labels(labels)));
    }

    // s_ij = z_i·z_j/τ, so dL/dz = (G + Gᵀ) z / τ.
    let mut sym = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym.set(i, j, (dsim.get(i, j) + dsim.get(j, i)) * inv_t);
        }
    }
    let grad = sym.matmul(z)?;
    Ok(LossAndGrad { loss, grad, anchors_used })
}

fn describe_labels(labels: &[ClassLabel]) -> alloc::string::String {
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    format!("{} rows: {} benign, {} malignant", labels.len(), labels.len() - pos, pos)
}

/// Literal transcription of the loss: nested loops over anchors, positives
/// and the contrast set, no max subtraction. Reference for tests; batches of
/// at most 64 rows.
pub fn supcon_loss_bruteforce(batch: &ContrastiveBatch, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let n = batch.len();
    if n > 64 {
        return Err(Error::ShapeMismatch(format!("brute-force oracle takes <= 64 rows, got {n}")));
    }
    let z = &batch.z;
    let labels = &batch.labels;
    let sim = |i: usize, j: usize| {
        let mut s = 0.0;
        for k in 0..z.cols() {
            s += z.get(i, k) * z.get(j, k);
        }
        s / cfg.temperature
    };
    let mut total = 0.0;
    let mut any = false;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        any = true;
        let mut denom = 0.0;
        for a in 0..n {
            if a != i {
                denom += libm::exp(sim(i, a));
            }
        }
        let np = positives.len() as f64;
        match cfg.variant {
            LossVariant::AsPrinted => {
                let mut mean_ratio = 0.0;
                for &p in &positives {
                    mean_ratio += libm::exp(sim(i, p)) / denom;
                }
                total += -libm::log(mean_ratio / np);
            }
            LossVariant::KhoslaOut => {
                let mut acc = 0.0;
                for &p in &positives {
                    acc += libm::log(libm::exp(sim(i, p)) / denom);
                }
                total += -acc / np;
            }
        }
    }
    if !any {
        return Err(Error::NoPositives(describe_labels(labels)));
    }
    Ok(total)
}

/// Mean cross-entropy over rows of an n×2 logit matrix.
pub fn cross_entropy(logits: &Matrix, labels: &[ClassLabel]) -> Result<f64> {
    cross_entropy_with_grad(logits, labels).map(|(l, _)| l)
}

/// Mean cross-entropy and dL/dlogits (`(softmax − onehot) / n`).
pub fn cross_entropy_with_grad(logits: &Matrix, labels: &[ClassLabel]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::LengthMismatch { left: logits.rows(), right: labels.len() });
    }
    if logits.rows() == 0 {
        return Err(Error::ShapeMismatch("cross-entropy over an empty batch".into()));
    }
    if !logits.is_finite() {
        return Err(Error::InvalidValue("non-finite logits".into()));
    }
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (i, (row, label)) in logits.iter_rows().zip(labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
        let lse = max + libm::log(sum);
        total += lse - row[label.index()];
        let g = grad.row_mut(i);
        for (k, v) in row.iter().enumerate() {
            g[k] = libm::exp(v - lse) / n;
        }
        g[label.index()] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{Benign as B, Malignant as M};

    fn batch(rows: &[[f64; 2]], labels: &[ClassLabel]) -> ContrastiveBatch {
        ContrastiveBatch::new(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    #[test]
    fn single_pair_is_exactly_zero() {
        let s = 0.5f64.sqrt();
        for variant in [LossVariant::AsPrinted, LossVariant::KhoslaOut] {
            for t in [0.03, 1.0] {
                let b = ContrastiveBatch::from_views(Matrix::from_rows(&[[s, s], [1.0, 0.0]]).unwrap(), &[M]).unwrap();
                let cfg = LossConfig::new(t, variant);
                assert_eq!(supcon_loss(&b, &cfg).unwrap(), 0.0);
                assert_eq!(supcon_loss_bruteforce(&b, &cfg).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn identical_same_class_vectors() {
        let b = batch(&[[1.0, 0.0]; 4], &[B; 4]);
        let expect = 4.0 * 3f64.ln();
        for variant in [LossVariant::AsPrinted, LossVariant::KhoslaOut] {
            let cfg = LossConfig::new(0.5, variant);
            assert!((supcon_loss(&b, &cfg).unwrap() - expect).abs() < 1e-12);
            assert!((supcon_loss_bruteforce(&b, &cfg).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_two_class_batch() {
        let b = batch(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], &[B, B, M, M]);
        let cfg = LossConfig::new(1.0, LossVariant::AsPrinted);
        let expect = 4.0 * (1.0 + 2.0 / core::f64::consts::E).ln();
        assert!((supcon_loss(&b, &cfg).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 2.205779).abs() < 1e-6);
    }

    #[test]
    fn lone_anchor_is_skipped() {
        let s = 0.5f64.sqrt();
        let b = batch(&[[1.0, 0.0], [s, s], [0.0, 1.0]], &[B, B, M]);
        let cfg = LossConfig::new(0.1, LossVariant::AsPrinted);
        let out = supcon_loss_with_grad(&b, &cfg).unwrap();
        assert_eq!(out.anchors_used, 2);
        // The same two anchors evaluated by hand.
        let sims = |i: usize, j: usize| crate::tensor::dot(b.z().row(i), b.z().row(j)) / 0.1;
        let mut expect = 0.0;
        for (i, p, other) in [(0, 1, 2), (1, 0, 2)] {
            let num = sims(i, p).exp();
            expect += -(num / (num + sims(i, other).exp())).ln();
        }
        assert!((out.loss - expect).abs() < 1e-12);
        assert!((supcon_loss_bruteforce(&b, &cfg).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_an_error() {
        let b = batch(&[[1.0, 0.0], [0.0, 1.0]], &[B, M]);
        let cfg = LossConfig::default();
        assert!(matches!(supcon_loss(&b, &cfg), Err(Error::NoPositives(_))));
        assert!(matches!(supcon_loss_bruteforce(&b, &cfg), Err(Error::NoPositives(_))));
    }

    #[test]
    fn batch_validation() {
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.0]]).unwrap();
        assert!(matches!(ContrastiveBatch::new(z, vec![B, B]), Err(Error::NonUnitRows { row: 1, .. })));
        let z = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(ContrastiveBatch::new(z, vec![B]).is_err());
        assert!(LossConfig::new(0.0, LossVariant::AsPrinted).validate().is_err());
    }

    #[test]
    fn stable_at_small_temperature() {
        let b = batch(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]], &[B, B, M, M]);
        let cfg = LossConfig::new(1e-3, LossVariant::AsPrinted);
        assert!(supcon_loss(&b, &cfg).unwrap().is_finite());
    }

    #[test]
    fn cross_entropy_examples() {
        let l = |rows: &[[f64; 2]], labels: &[ClassLabel]| cross_entropy(&Matrix::from_rows(rows).unwrap(), labels).unwrap();
        assert!((l(&[[0.0, 0.0]], &[B]) - 2f64.ln()).abs() < 1e-15);
        let sat = l(&[[10.0, -10.0]], &[B]);
        assert!(sat <= 1e-8 && (sat - 2.06e-9).abs() < 1e-11);
        assert!((l(&[[1.0, 2.0]], &[M]) - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((l(&[[1.0, 2.0]], &[M]) - 0.31326).abs() < 1e-5);
    }
}
