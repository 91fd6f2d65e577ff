use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassLabel, ConfusionMatrix};

/// Marks a metric whose denominator was zero (reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    PrecisionUndefined,
    SensitivityUndefined,
    SpecificityUndefined,
    F1Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    #[serde(flatten)]
    pub cm: ConfusionMatrix,
    pub flags: Vec<MetricFlag>,
}

pub fn confusion_matrix(preds: &[ClassLabel], truth: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: truth.len() });
    }
    if preds.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truth) {
        match (p.is_positive(), t.is_positive()) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fn_ += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64, flag: MetricFlag, flags: &mut Vec<MetricFlag>) -> f64 {
    if den == 0 {
        flags.push(flag);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, sensitivity, specificity, positive-class F1 and balanced
/// accuracy `(sensitivity + specificity) / 2`.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut flags = Vec::new();
    let precision = ratio(cm.tp, cm.tp + cm.fp, MetricFlag::PrecisionUndefined, &mut flags);
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_, MetricFlag::SensitivityUndefined, &mut flags);
    let specificity = ratio(cm.tn, cm.tn + cm.fp, MetricFlag::SpecificityUndefined, &mut flags);
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        flags.push(MetricFlag::F1Undefined);
        0.0
    };
    let balanced_accuracy = (sensitivity + specificity) / 2.0;
    Ok(MetricsReport { precision, sensitivity, specificity, f1, balanced_accuracy, cm: *cm, flags })
}

/// Positive-class F1 of a prediction vector (0 when undefined).
pub fn f1_score(preds: &[ClassLabel], truth: &[ClassLabel]) -> Result<f64> {
    compute_metrics(&confusion_matrix(preds, truth)?).map(|m| m.f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use ClassLabel::{Benign as B, Malignant as M};

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion_matrix(&[M, M, B, B], &[M, M, B, B]).unwrap(), ConfusionMatrix::new(2, 0, 0, 2));
        assert_eq!(confusion_matrix(&[M, M], &[B, B]).unwrap(), ConfusionMatrix::new(0, 0, 2, 0));
        assert!(matches!(confusion_matrix(&[M], &[M, B]), Err(Error::LengthMismatch { .. })));
        assert_eq!(confusion_matrix(&[], &[]), Err(Error::EmptyMatrix));
    }

    #[test]
    fn table_row_regression() {
        let m = compute_metrics(&ConfusionMatrix::new(38740, 5529, 11627, 101359)).unwrap();
        for (got, want) in [
            (m.precision, 0.7692),
            (m.sensitivity, 0.8751),
            (m.specificity, 0.8971),
            (m.f1, 0.8188),
            (m.balanced_accuracy, 0.8861),
        ] {
            assert!((got - want).abs() <= 1e-4, "{got} vs {want}");
        }
        assert!(m.flags.is_empty());
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&ConfusionMatrix::new(10, 0, 0, 10)).unwrap();
        assert_eq!((m.precision, m.sensitivity, m.specificity, m.f1, m.balanced_accuracy), (1.0, 1.0, 1.0, 1.0, 1.0));

        let m = compute_metrics(&ConfusionMatrix::new(0, 5, 0, 5)).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.sensitivity, 0.0);
        assert_eq!(m.specificity, 1.0);
        assert_eq!(m.balanced_accuracy, 0.5);
        assert_eq!(m.flags, vec![MetricFlag::PrecisionUndefined, MetricFlag::F1Undefined]);

        assert_eq!(compute_metrics(&ConfusionMatrix::default()), Err(Error::EmptyMatrix));
    }
}
