//! Evaluation: binary metrics, PCA of embeddings and prediction maps.

mod metrics;
mod pca;
mod predmap;

pub use metrics::{compute_metrics, confusion_matrix, f1_score, MetricFlag, MetricsReport};
pub use pca::{pca_fit, pca_transform, symmetric_eigen, PcaModel};
pub use predmap::{level_for, reconstruct_prediction_map, PredictionMap, BACKGROUND_LEVEL, BENIGN_LEVEL, MALIGNANT_LEVEL};
