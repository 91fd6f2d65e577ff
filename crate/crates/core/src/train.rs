//! Training loops: contrastive pre-training, the frozen-feature linear probe,
//! the end-to-end cross-entropy baseline, and early stopping.
//!
//! Randomness per run (see [`crate::rng`]): minibatch order comes from
//! stream [`streams::SHUFFLE`] and augmentation from [`streams::AUGMENT`] of
//! the run seed. Each epoch draws one full Fisher-Yates permutation of the
//! sample indices; augmentation draws are consumed in minibatch order,
//! sample by sample, view A before view B. The last minibatch of an epoch
//! may be short and is kept.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_view, two_view, AugmentPolicy};
use crate::error::{Error, Result};
use crate::eval::f1_score;
use crate::loss::{cross_entropy, cross_entropy_with_grad, supcon_loss_with_grad, ContrastiveBatch, LossConfig};
use crate::model::{ClassifierConfig, Encoder, LinearClassifier, Parameterized, ProjectionHead, VitEncoder};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng::{self, streams};
use crate::tensor::Matrix;
use crate::types::{ClassLabel, PatchImage};

/// Batch size used for inference passes (feature extraction, validation).
pub const INFERENCE_BATCH: usize = 64;

fn invalid(field: &str, reason: String) -> Error {
    Error::InvalidConfig { field: field.into(), reason }
}

fn check_common(prefix: &str, lr: f64, epochs: usize, batch: usize, min_batch: usize) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(invalid(&format!("{prefix}.lr"), format!("must be > 0, got {lr}")));
    }
    if epochs == 0 {
        return Err(invalid(&format!("{prefix}.epochs"), "must be >= 1".into()));
    }
    if batch < min_batch {
        return Err(invalid(&format!("{prefix}.batch_size"), format!("must be >= {min_batch}, got {batch}")));
    }
    Ok(())
}

fn check_optimizer(prefix: &str, o: &AdamWConfig) -> Result<()> {
    if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
        return Err(invalid(&format!("{prefix}.optimizer"), "betas must lie in [0, 1)".into()));
    }
    if !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
        return Err(invalid(&format!("{prefix}.optimizer"), "eps must be > 0 and weight_decay >= 0".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub lr: f64,
    pub epochs: usize,
    /// Samples per minibatch; the contrastive batch holds twice as many views.
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self { lr: 5e-5, epochs: 50, batch_size: 32, optimizer: AdamWConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self { lr: 0.01, epochs: 50, patience: 5, batch_size: 64, optimizer: AdamWConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { lr: 1e-5, epochs: 50, patience: 5, batch_size: 64, optimizer: AdamWConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub baseline: BaselineConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s1 = &self.stage1;
        check_common("train.stage1", s1.lr, s1.epochs, s1.batch_size, 2)?;
        check_optimizer("train.stage1", &s1.optimizer)?;
        let s2 = &self.stage2;
        check_common("train.stage2", s2.lr, s2.epochs, s2.batch_size, 1)?;
        check_optimizer("train.stage2", &s2.optimizer)?;
        if s2.patience == 0 {
            return Err(invalid("train.stage2.patience", "must be >= 1".into()));
        }
        let b = &self.baseline;
        check_common("train.baseline", b.lr, b.epochs, b.batch_size, 1)?;
        check_optimizer("train.baseline", &b.optimizer)?;
        if b.patience == 0 {
            return Err(invalid("train.baseline.patience", "must be >= 1".into()));
        }
        Ok(())
    }
}

/// Source of wall-clock time for history records.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero elapsed time.
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// One line of a training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// `train` for records without validation, `val` when `f1` refers to the
    /// validation split.
    pub split: String,
    /// Mean training loss over the epoch's minibatches.
    pub loss: f64,
    pub f1: Option<f64>,
    pub val_loss: Option<f64>,
    pub lr: f64,
    pub wall_clock_s: f64,
}

/// Early stopping on a metric to maximise (strict improvement).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_metric: f64,
    /// 1-based observation index of the best metric; 0 before any.
    pub best_epoch: usize,
    pub epochs_since_improve: usize,
    pub observations: usize,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self { best_metric: f64::NEG_INFINITY, best_epoch: 0, epochs_since_improve: 0, observations: 0 }
    }
}

impl EarlyStopState {
    pub fn improved_last(&self) -> bool {
        self.observations > 0 && self.best_epoch == self.observations
    }
}

/// Feeds one observation; returns the new state and whether to stop.
pub fn early_stopping_step(state: &EarlyStopState, metric: f64, patience: usize) -> (EarlyStopState, bool) {
    let mut next = *state;
    next.observations += 1;
    if metric > state.best_metric {
        next.best_metric = metric;
        next.best_epoch = next.observations;
        next.epochs_since_improve = 0;
    } else {
        next.epochs_since_improve += 1;
    }
    let stop = next.epochs_since_improve >= patience;
    (next, stop)
}

fn epoch_order(n: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut order, rng);
    order
}

fn check_dataset(images: usize, labels: usize) -> Result<()> {
    if images != labels {
        return Err(Error::LengthMismatch { left: images, right: labels });
    }
    if images == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Outcome {
    pub history: Vec<EpochRecord>,
}

/// Contrastive pre-training of encoder and projection head for the full
/// configured number of epochs.
#[allow(clippy::too_many_arguments)]
pub fn train_stage1(
    encoder: &mut VitEncoder,
    projector: &mut ProjectionHead,
    images: &[PatchImage],
    labels: &[ClassLabel],
    cfg: &Stage1Config,
    loss_cfg: &LossConfig,
    policy: &AugmentPolicy,
    seed: u64,
    clock: &dyn Clock,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Stage1Outcome> {
    check_dataset(images.len(), labels.len())?;
    check_common("train.stage1", cfg.lr, cfg.epochs, cfg.batch_size, 2)?;
    loss_cfg.validate()?;
    policy.validate()?;
    if projector.config().in_dim != encoder.width() {
        return Err(Error::ShapeMismatch(format!(
            "projection input {} != encoder width {}",
            projector.config().in_dim,
            encoder.width()
        )));
    }
    let mut shuffle_rng = rng::derive_stream(seed, streams::SHUFFLE);
    let mut aug_rng = rng::derive_stream(seed, streams::AUGMENT);
    let mut enc_opt = AdamW::new(cfg.optimizer, encoder.params().len());
    let mut proj_opt = AdamW::new(cfg.optimizer, projector.params().len());
    let start = clock.seconds();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(images.len(), &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() == 1 {
                log::warn!("stage 1 epoch {epoch}: final minibatch has a single sample (loss 0)");
            }
            let mut views = Vec::with_capacity(2 * chunk.len());
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (a, v) = two_view(&images[i], policy, &mut aug_rng);
                views.push(a);
                views.push(v);
                batch_labels.push(labels[i]);
            }
            let patches = encoder.patchify(&views);
            let (r, enc_trace) = encoder.forward_train(&patches)?;
            let (z, proj_trace) = projector.forward_train(&r)?;
            let batch = ContrastiveBatch::from_views(z, &batch_labels)?;
            let out = supcon_loss_with_grad(&batch, loss_cfg)?;
            if !out.loss.is_finite() || !out.grad.is_finite() {
                return Err(Error::NonFiniteLoss { stage: "stage1", epoch, batch: b });
            }
            let (proj_grad, dr) = projector.backward(&proj_trace, &out.grad)?;
            let enc_grad = encoder.backward(&enc_trace, &dr)?;
            proj_opt.step(projector.params_mut().data_mut(), &proj_grad, cfg.lr)?;
            enc_opt.step(encoder.params_mut().data_mut(), &enc_grad, cfg.lr)?;
            loss_sum += out.loss;
            n_batches += 1;
        }
        let record = EpochRecord {
            epoch,
            split: "train".into(),
            loss: loss_sum / n_batches as f64,
            f1: None,
            val_loss: None,
            lr: cfg.lr,
            wall_clock_s: clock.seconds() - start,
        };
        log::info!("stage 1 epoch {epoch}/{}: loss {:.5}", cfg.epochs, record.loss);
        on_epoch(&record);
        history.push(record);
    }
    Ok(Stage1Outcome { history })
}

/// Inference-mode representations, computed in chunks and rounded to `f32`
/// (the precision of the on-disk feature cache).
pub fn extract_features<E: Encoder + ?Sized>(encoder: &E, images: &[PatchImage]) -> Result<Matrix> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = encoder.width();
    let mut data = Vec::with_capacity(images.len() * width);
    for chunk in images.chunks(INFERENCE_BATCH) {
        let r = encoder.encode(chunk)?;
        data.extend(r.as_slice().iter().map(|&v| v as f32 as f64));
    }
    Matrix::new(images.len(), width, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    /// Classifier from the best validation epoch.
    pub classifier: LinearClassifier,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// Linear probe on frozen features with early stopping on validation F1.
#[allow(clippy::too_many_arguments)]
pub fn train_stage2(
    train_x: &Matrix,
    train_y: &[ClassLabel],
    val_x: &Matrix,
    val_y: &[ClassLabel],
    cfg: &Stage2Config,
    seed: u64,
    clock: &dyn Clock,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Stage2Outcome> {
    check_dataset(train_x.rows(), train_y.len())?;
    check_dataset(val_x.rows(), val_y.len())?;
    check_common("train.stage2", cfg.lr, cfg.epochs, cfg.batch_size, 1)?;
    if train_x.cols() != val_x.cols() {
        return Err(Error::ShapeMismatch(format!("train features {} wide, val {}", train_x.cols(), val_x.cols())));
    }
    let mut clf = LinearClassifier::new(ClassifierConfig::new(train_x.cols()), seed)?;
    let mut opt = AdamW::new(cfg.optimizer, clf.params().len());
    let mut shuffle_rng = rng::derive_stream(seed, streams::SHUFFLE);
    let start = clock.seconds();
    let mut state = EarlyStopState::default();
    let mut best = clf.clone();
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(train_x.rows(), &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = train_x.select_rows(chunk);
            let y: Vec<ClassLabel> = chunk.iter().map(|&i| train_y[i]).collect();
            let logits = clf.logits(&x)?;
            let (loss, dlogits) = cross_entropy_with_grad(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { stage: "stage2", epoch, batch: b });
            }
            let (grads, _) = clf.backward(&x, &dlogits)?;
            opt.step(clf.params_mut().data_mut(), &grads, cfg.lr)?;
            loss_sum += loss;
            n_batches += 1;
        }
        let val_logits = clf.logits(val_x)?;
        if !val_logits.is_finite() {
            return Err(Error::NonFiniteLoss { stage: "stage2", epoch, batch: n_batches });
        }
        let val_loss = cross_entropy(&val_logits, val_y)?;
        let f1 = f1_score(&LinearClassifier::predict_from_logits(&val_logits), val_y)?;
        let (next, stop) = early_stopping_step(&state, f1, cfg.patience);
        state = next;
        if state.improved_last() {
            best = clf.clone();
        }
        let record = EpochRecord {
            epoch,
            split: "val".into(),
            loss: loss_sum / n_batches as f64,
            f1: Some(f1),
            val_loss: Some(val_loss),
            lr: cfg.lr,
            wall_clock_s: clock.seconds() - start,
        };
        log::info!("stage 2 epoch {epoch}: loss {:.5} val f1 {f1:.4}", record.loss);
        on_epoch(&record);
        history.push(record);
        if stop {
            log::info!("stage 2 early stop at epoch {epoch}, best epoch {}", state.best_epoch);
            break;
        }
    }
    Ok(Stage2Outcome { classifier: best, history, best_epoch: state.best_epoch, best_f1: state.best_metric })
}

/// Predicted labels for every image, evaluated in inference chunks.
pub fn predict_images(encoder: &VitEncoder, classifier: &LinearClassifier, images: &[PatchImage]) -> Result<Vec<ClassLabel>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFERENCE_BATCH) {
        out.extend(classifier.predict(&encoder.encode(chunk)?)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub encoder: VitEncoder,
    pub classifier: LinearClassifier,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// End-to-end cross-entropy fine-tuning of encoder and classifier, one
/// augmented view per sample, early stopping on validation F1.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune_baseline(
    mut encoder: VitEncoder,
    mut classifier: LinearClassifier,
    train: (&[PatchImage], &[ClassLabel]),
    val: (&[PatchImage], &[ClassLabel]),
    cfg: &BaselineConfig,
    policy: &AugmentPolicy,
    seed: u64,
    clock: &dyn Clock,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<BaselineOutcome> {
    let (train_imgs, train_y) = train;
    let (val_imgs, val_y) = val;
    check_dataset(train_imgs.len(), train_y.len())?;
    check_dataset(val_imgs.len(), val_y.len())?;
    check_common("train.baseline", cfg.lr, cfg.epochs, cfg.batch_size, 1)?;
    policy.validate()?;
    if classifier.config().in_dim != encoder.width() {
        return Err(Error::ShapeMismatch(format!(
            "classifier input {} != encoder width {}",
            classifier.config().in_dim,
            encoder.width()
        )));
    }
    let mut shuffle_rng = rng::derive_stream(seed, streams::SHUFFLE);
    let mut aug_rng = rng::derive_stream(seed, streams::AUGMENT);
    let mut enc_opt = AdamW::new(cfg.optimizer, encoder.params().len());
    let mut clf_opt = AdamW::new(cfg.optimizer, classifier.params().len());
    let start = clock.seconds();
    let mut state = EarlyStopState::default();
    let mut best = (encoder.clone(), classifier.clone());
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(train_imgs.len(), &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let views: Vec<PatchImage> = chunk.iter().map(|&i| augment_view(&train_imgs[i], policy, &mut aug_rng)).collect();
            let y: Vec<ClassLabel> = chunk.iter().map(|&i| train_y[i]).collect();
            let (r, trace) = encoder.forward_train(&encoder.patchify(&views))?;
            let logits = classifier.logits(&r)?;
            let (loss, dlogits) = cross_entropy_with_grad(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { stage: "baseline", epoch, batch: b });
            }
            let (clf_grad, dr) = classifier.backward(&r, &dlogits)?;
            let enc_grad = encoder.backward(&trace, &dr)?;
            clf_opt.step(classifier.params_mut().data_mut(), &clf_grad, cfg.lr)?;
            enc_opt.step(encoder.params_mut().data_mut(), &enc_grad, cfg.lr)?;
            loss_sum += loss;
            n_batches += 1;
        }
        let preds = predict_images(&encoder, &classifier, val_imgs)?;
        let f1 = f1_score(&preds, val_y)?;
        let (next, stop) = early_stopping_step(&state, f1, cfg.patience);
        state = next;
        if state.improved_last() {
            best = (encoder.clone(), classifier.clone());
        }
        let record = EpochRecord {
            epoch,
            split: "val".into(),
            loss: loss_sum / n_batches as f64,
            f1: Some(f1),
            val_loss: None,
            lr: cfg.lr,
            wall_clock_s: clock.seconds() - start,
        };
        log::info!("baseline epoch {epoch}: loss {:.5} val f1 {f1:.4}", record.loss);
        on_epoch(&record);
        history.push(record);
        if stop {
            break;
        }
    }
    let (encoder, classifier) = best;
    Ok(BaselineOutcome { encoder, classifier, history, best_epoch: state.best_epoch, best_f1: state.best_metric })
}
