//! The pipeline commands. Each one reads the artifacts of earlier stages
//! from the run's output directory, writes its own under
//! `<outdir>/<stage>/` and records them in that directory's manifest.
//!
//! ```text
//! <outdir>/
//!   data/       images/<patient>/*.png, truth/<patient>.pgm, split.csv, split_stats.json
//!   stage1/     encoder.{json,bin}, projection.{json,bin}, history.jsonl
//!   features/   train.emb, val.emb, test.emb
//!   stage2/     classifier.{json,bin}, history.jsonl, summary.json
//!   baseline/   encoder.{json,bin}, classifier.{json,bin}, history.jsonl, summary.json
//!   eval/       metrics_<model>.json, predictions_<model>.csv, pca_<model>.{csv,png,json}
//!   maps/       <model>/<patient>.png, <model>/<patient>_truth.png, <model>/summary.json
//!   sweep/      results.csv, results.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use supcon_core::data::{dataset_stats, generate_synthetic, patch_file_name, split_dataset, DatasetSplit, PatchRecord, SplitName};
use supcon_core::eval::{compute_metrics, confusion_matrix, level_for, pca_fit, pca_transform, reconstruct_prediction_map, MetricsReport};
use supcon_core::model::{ClassifierConfig, LinearClassifier, ProjectionConfig, ProjectionHead, VitEncoder};
use supcon_core::train::{
    extract_features, fine_tune_baseline, predict_images, train_stage1, train_stage2, Clock, EpochRecord, Stage1Outcome,
    Stage2Outcome,
};
use supcon_core::{ClassLabel, Matrix, PatchImage};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{self, CheckpointMeta};
use crate::io::{create_dir, load_dataset, load_images, read_png, write_gray_png, write_json, write_png};
use crate::manifest::{require, Recorder};
use crate::pretrained::import_encoder;

/// Wall-clock seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Which trained model a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Contrastive encoder + linear probe.
    Supcon,
    /// Cross-entropy fine-tuned encoder.
    Baseline,
}

impl ModelChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelChoice::Supcon => "supcon",
            ModelChoice::Baseline => "baseline",
        }
    }
}

/// Artifact locations for one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub outdir: PathBuf,
}

impl Layout {
    pub fn new(outdir: impl Into<PathBuf>) -> Self {
        Self { outdir: outdir.into() }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.outdir.join(stage)
    }

    pub fn images(&self) -> PathBuf {
        self.dir("data").join("images")
    }

    pub fn truth(&self, patient: &str) -> PathBuf {
        self.dir("data").join("truth").join(format!("{patient}.pgm"))
    }

    pub fn split_csv(&self) -> PathBuf {
        self.dir("data").join("split.csv")
    }

    pub fn features(&self, split: SplitName) -> PathBuf {
        self.dir("features").join(format!("{}.emb", split.as_str()))
    }

    pub fn metrics(&self, model: ModelChoice) -> PathBuf {
        self.dir("eval").join(format!("metrics_{}.json", model.as_str()))
    }

    pub fn predictions(&self, model: ModelChoice) -> PathBuf {
        self.dir("eval").join(format!("predictions_{}.csv", model.as_str()))
    }
}

fn layout(cfg: &RunConfig) -> Layout {
    Layout::new(&cfg.outdir)
}

/// The image root: `data.root`, or the generated images under the output
/// directory.
pub fn dataset_root(cfg: &RunConfig) -> PathBuf {
    cfg.data.root.clone().unwrap_or_else(|| layout(cfg).images())
}

/// Images and labels of one split, in split-manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub records: Vec<PatchRecord>,
    pub images: Vec<PatchImage>,
    pub labels: Vec<ClassLabel>,
}

impl Labeled {
    pub fn load(root: &Path, records: &[PatchRecord]) -> Result<Self> {
        Ok(Self {
            records: records.to_vec(),
            images: load_images(root, records)?,
            labels: records.iter().map(|r| r.label).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitImages {
    pub train: Labeled,
    pub val: Labeled,
    pub test: Labeled,
}

impl SplitImages {
    pub fn load(root: &Path, split: &DatasetSplit) -> Result<Self> {
        Ok(Self {
            train: Labeled::load(root, &split.train)?,
            val: Labeled::load(root, &split.val)?,
            test: Labeled::load(root, &split.test)?,
        })
    }

    pub fn get(&self, name: SplitName) -> &Labeled {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// The encoder training starts from: imported weights when `pretrained` is
/// set, otherwise a fresh initialisation from the run seed.
pub fn initial_encoder(cfg: &RunConfig) -> Result<VitEncoder> {
    match &cfg.pretrained {
        Some(path) => import_encoder(path, &cfg.encoder),
        None => Ok(VitEncoder::new(cfg.encoder, cfg.seed)?),
    }
}

fn recorder(cfg: &RunConfig, stage: &str, command: &str, seed: u64) -> Recorder {
    Recorder::new(&cfg.outdir, stage, command, cfg.hash(), seed)
}

fn read_split(cfg: &RunConfig, rec: &mut Recorder) -> Result<DatasetSplit> {
    let path = layout(cfg).split_csv();
    rec.input(&path, "split manifest (run `split` first)")?;
    formats::read_split_csv(&path)
}

fn record_pretrained(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    if let Some(p) = &cfg.pretrained {
        rec.input(p, "pretrained weight manifest")?;
    }
    Ok(())
}

/// Writes the synthetic corpus as PNG patches plus one PGM label grid per
/// patient; returns the number of patches.
pub fn cmd_synth(cfg: &RunConfig) -> Result<usize> {
    let synth = &cfg.data.synthetic;
    synth.validate().map_err(|e| match e {
        supcon_core::Error::InvalidConfig { field, reason } => Error::Config { field, reason },
        other => Error::Core(other),
    })?;
    let l = layout(cfg);
    let images = l.images();
    if images.exists() {
        std::fs::remove_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    }
    let mut rec = recorder(cfg, "data", "synth", synth.seed);
    let mut count = 0;
    for patient in generate_synthetic(synth)? {
        for p in &patient.patches {
            let name = patch_file_name(&patient.patient_id, p.x, p.y, p.label);
            write_png(&images.join(&patient.patient_id).join(name), &p.image)?;
            count += 1;
        }
        let grid: Vec<u8> = patient.label_grid.iter().map(|&c| level_for(c)).collect();
        let truth = l.truth(&patient.patient_id);
        formats::write_pgm(&truth, patient.grid_w, patient.grid_h, &grid)?;
        rec.output(&truth)?;
    }
    rec.output(&images)?;
    rec.finish()?;
    log::info!("synth: wrote {count} patches under {}", images.display());
    Ok(count)
}

/// Scans the dataset root and writes the patient-level split.
pub fn cmd_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    let l = layout(cfg);
    let root = dataset_root(cfg);
    let mut rec = recorder(cfg, "data", "split", cfg.split.seed);
    rec.input(&root, "dataset root")?;
    let loaded = load_dataset(&root)?;
    let split = split_dataset(&loaded.records, &cfg.split)?;
    let stats = dataset_stats(&split);
    formats::write_split_csv(&l.split_csv(), &split)?;
    let stats_path = l.dir("data").join("split_stats.json");
    write_json(&stats_path, &stats)?;
    rec.output(&l.split_csv())?;
    rec.output(&stats_path)?;
    rec.finish()?;
    log::info!(
        "split: {} / {} / {} patches ({} files skipped)",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        loaded.rejected.len()
    );
    Ok(split)
}

/// Contrastive pre-training on the train split.
pub fn cmd_train_stage1(cfg: &RunConfig) -> Result<Stage1Outcome> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "stage1", "train-stage1", cfg.seed);
    let split = read_split(cfg, &mut rec)?;
    record_pretrained(cfg, &mut rec)?;
    let train = Labeled::load(&dataset_root(cfg), &split.train)?;
    let mut encoder = initial_encoder(cfg)?;
    let mut projector = ProjectionHead::new(ProjectionConfig::new(cfg.encoder.width), cfg.seed)?;
    let clock = WallClock::start();
    let outcome = train_stage1(
        &mut encoder,
        &mut projector,
        &train.images,
        &train.labels,
        &cfg.train.stage1,
        &cfg.loss,
        &cfg.augment,
        cfg.seed,
        &clock,
        |_| {},
    )?;
    let meta = CheckpointMeta { stage: "stage1".into(), epoch: cfg.train.stage1.epochs, seed: cfg.seed, history: outcome.history.clone() };
    let dir = l.dir("stage1");
    let (enc_path, proj_path, hist_path) = (dir.join("encoder.json"), dir.join("projection.json"), dir.join("history.jsonl"));
    formats::save_encoder(&enc_path, &encoder, &meta)?;
    formats::save_projection(&proj_path, &projector, &meta)?;
    formats::write_history(&hist_path, &outcome.history)?;
    for p in [&enc_path, &enc_path.with_extension("bin"), &proj_path, &proj_path.with_extension("bin"), &hist_path] {
        rec.output(p)?;
    }
    rec.finish()?;
    Ok(outcome)
}

/// Frozen-encoder features for every split.
pub fn cmd_extract(cfg: &RunConfig) -> Result<()> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "features", "extract", cfg.seed);
    let split = read_split(cfg, &mut rec)?;
    let enc_path = l.dir("stage1").join("encoder.json");
    record_checkpoint(&mut rec, &enc_path, "stage-1 encoder checkpoint (run `train-stage1` first)")?;
    let (encoder, _) = formats::load_encoder(&enc_path, &cfg.encoder)?;
    let root = dataset_root(cfg);
    for name in SplitName::ALL {
        let data = Labeled::load(&root, split.get(name))?;
        let x = extract_features(&encoder, &data.images)?;
        let path = l.features(name);
        formats::write_embeddings(&path, &x, Some(&data.labels))?;
        rec.output(&path)?;
        log::info!("extract: {} {} x {}", name.as_str(), x.rows(), x.cols());
    }
    rec.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub epochs_run: usize,
}

fn read_labeled_features(rec: &mut Recorder, path: &Path) -> Result<(Matrix, Vec<ClassLabel>)> {
    rec.input(path, "embedding cache (run `extract` first)")?;
    let (x, labels) = formats::read_embeddings(path)?;
    let labels = labels.ok_or_else(|| Error::format(path, "embedding cache has no labels"))?;
    Ok((x, labels))
}

/// Linear probe on the cached features.
pub fn cmd_train_stage2(cfg: &RunConfig) -> Result<Stage2Outcome> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "stage2", "train-stage2", cfg.seed);
    let (train_x, train_y) = read_labeled_features(&mut rec, &l.features(SplitName::Train))?;
    let (val_x, val_y) = read_labeled_features(&mut rec, &l.features(SplitName::Val))?;
    let clock = WallClock::start();
    let outcome = train_stage2(&train_x, &train_y, &val_x, &val_y, &cfg.train.stage2, cfg.seed, &clock, |_| {})?;
    let dir = l.dir("stage2");
    let meta = CheckpointMeta { stage: "stage2".into(), epoch: outcome.best_epoch, seed: cfg.seed, history: outcome.history.clone() };
    let clf_path = dir.join("classifier.json");
    formats::save_classifier(&clf_path, &outcome.classifier, &meta)?;
    let hist_path = dir.join("history.jsonl");
    formats::write_history(&hist_path, &outcome.history)?;
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &TrainSummary { best_epoch: outcome.best_epoch, best_val_f1: outcome.best_f1, epochs_run: outcome.history.len() })?;
    for p in [&clf_path, &clf_path.with_extension("bin"), &hist_path, &summary_path] {
        rec.output(p)?;
    }
    rec.finish()?;
    log::info!("stage 2: best val F1 {:.4} at epoch {}", outcome.best_f1, outcome.best_epoch);
    Ok(outcome)
}

/// End-to-end cross-entropy fine-tuning.
pub fn cmd_train_baseline(cfg: &RunConfig) -> Result<TrainSummary> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "baseline", "train-baseline", cfg.seed);
    let split = read_split(cfg, &mut rec)?;
    record_pretrained(cfg, &mut rec)?;
    let root = dataset_root(cfg);
    let train = Labeled::load(&root, &split.train)?;
    let val = Labeled::load(&root, &split.val)?;
    let encoder = initial_encoder(cfg)?;
    let classifier = LinearClassifier::new(ClassifierConfig::new(cfg.encoder.width), cfg.seed)?;
    let clock = WallClock::start();
    let outcome = fine_tune_baseline(
        encoder,
        classifier,
        (&train.images, &train.labels),
        (&val.images, &val.labels),
        &cfg.train.baseline,
        &cfg.augment,
        cfg.seed,
        &clock,
        |_| {},
    )?;
    let dir = l.dir("baseline");
    let meta = CheckpointMeta { stage: "baseline".into(), epoch: outcome.best_epoch, seed: cfg.seed, history: outcome.history.clone() };
    let (enc_path, clf_path, hist_path) = (dir.join("encoder.json"), dir.join("classifier.json"), dir.join("history.jsonl"));
    formats::save_encoder(&enc_path, &outcome.encoder, &meta)?;
    formats::save_classifier(&clf_path, &outcome.classifier, &meta)?;
    formats::write_history(&hist_path, &outcome.history)?;
    let summary = TrainSummary { best_epoch: outcome.best_epoch, best_val_f1: outcome.best_f1, epochs_run: outcome.history.len() };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    for p in [&enc_path, &enc_path.with_extension("bin"), &clf_path, &clf_path.with_extension("bin"), &hist_path, &summary_path] {
        rec.output(p)?;
    }
    rec.finish()?;
    log::info!("baseline: best val F1 {:.4} at epoch {}", outcome.best_f1, outcome.best_epoch);
    Ok(summary)
}

fn record_checkpoint(rec: &mut Recorder, path: &Path, what: &str) -> Result<()> {
    rec.input(path, what)?;
    rec.input(&path.with_extension("bin"), what)
}

/// Test-split predictions of the chosen model, in split-manifest order.
fn test_predictions(cfg: &RunConfig, model: ModelChoice, rec: &mut Recorder) -> Result<(Vec<PatchRecord>, Vec<ClassLabel>)> {
    let l = layout(cfg);
    let split = read_split(cfg, rec)?;
    match model {
        ModelChoice::Supcon => {
            let (x, _) = read_labeled_features(rec, &l.features(SplitName::Test))?;
            let clf_path = l.dir("stage2").join("classifier.json");
            record_checkpoint(rec, &clf_path, "stage-2 classifier (run `train-stage2` first)")?;
            let (clf, _) = formats::load_classifier(&clf_path, &ClassifierConfig::new(cfg.encoder.width))?;
            if x.rows() != split.test.len() {
                return Err(Error::ManifestMismatch {
                    path: l.features(SplitName::Test),
                    reason: format!("{} rows, split has {} test patches; rerun `extract`", x.rows(), split.test.len()),
                });
            }
            Ok((split.test, clf.predict(&x)?))
        }
        ModelChoice::Baseline => {
            let (enc_path, clf_path) = (l.dir("baseline").join("encoder.json"), l.dir("baseline").join("classifier.json"));
            record_checkpoint(rec, &enc_path, "baseline encoder (run `train-baseline` first)")?;
            record_checkpoint(rec, &clf_path, "baseline classifier (run `train-baseline` first)")?;
            let (enc, _) = formats::load_encoder(&enc_path, &cfg.encoder)?;
            let (clf, _) = formats::load_classifier(&clf_path, &ClassifierConfig::new(cfg.encoder.width))?;
            let test = Labeled::load(&dataset_root(cfg), &split.test)?;
            Ok((split.test, predict_images(&enc, &clf, &test.images)?))
        }
    }
}

/// Test-split metrics and per-patch predictions.
pub fn cmd_eval(cfg: &RunConfig, model: ModelChoice) -> Result<MetricsReport> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "eval", &format!("eval-{}", model.as_str()), cfg.seed);
    let (records, preds) = test_predictions(cfg, model, &mut rec)?;
    let truth: Vec<ClassLabel> = records.iter().map(|r| r.label).collect();
    let report = compute_metrics(&confusion_matrix(&preds, &truth)?)?;
    let (metrics_path, preds_path) = (l.metrics(model), l.predictions(model));
    write_json(&metrics_path, &report)?;
    formats::write_predictions(&preds_path, &records, &preds)?;
    rec.output(&metrics_path)?;
    rec.output(&preds_path)?;
    rec.finish()?;
    log::info!("eval {}: F1 {:.4}", model.as_str(), report.f1);
    Ok(report)
}

/// Explained variance of the exported projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub components: usize,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub truncated: bool,
}

/// PCA of the test-split representations.
pub fn cmd_pca(cfg: &RunConfig, model: ModelChoice) -> Result<PcaSummary> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "eval", &format!("pca-{}", model.as_str()), cfg.seed);
    let (x, labels) = match model {
        ModelChoice::Supcon => read_labeled_features(&mut rec, &l.features(SplitName::Test))?,
        ModelChoice::Baseline => {
            let split = read_split(cfg, &mut rec)?;
            let enc_path = l.dir("baseline").join("encoder.json");
            record_checkpoint(&mut rec, &enc_path, "baseline encoder (run `train-baseline` first)")?;
            let (enc, _) = formats::load_encoder(&enc_path, &cfg.encoder)?;
            let test = Labeled::load(&dataset_root(cfg), &split.test)?;
            (extract_features(&enc, &test.images)?, test.labels)
        }
    };
    let pca = pca_fit(&x, cfg.eval.pca_components)?;
    let scores = pca_transform(&pca, &x)?;
    let stem = l.dir("eval").join(format!("pca_{}", model.as_str()));
    let csv_path = stem.with_extension("csv");
    formats::write_pca_csv(&csv_path, &scores, &labels)?;
    rec.output(&csv_path)?;
    if cfg.eval.pca_png && scores.cols() >= 2 {
        let png = stem.with_extension("png");
        formats::write_pca_png(&png, &scores, &labels)?;
        rec.output(&png)?;
    }
    let summary = PcaSummary {
        components: scores.cols(),
        explained_variance: pca.explained_variance,
        explained_variance_ratio: pca.explained_variance_ratio,
        truncated: pca.truncated,
    };
    let json = stem.with_extension("json");
    write_json(&json, &summary)?;
    rec.output(&json)?;
    rec.finish()?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMap {
    pub patches: usize,
    /// Fraction of patches whose prediction equals the label.
    pub agreement: f64,
    pub width: usize,
    pub height: usize,
}

/// Per-patient prediction rasters (and label rasters for comparison) from
/// the saved test predictions.
pub fn cmd_predmap(cfg: &RunConfig, model: ModelChoice) -> Result<BTreeMap<String, PatientMap>> {
    let l = layout(cfg);
    let mut rec = recorder(cfg, "maps", &format!("predmap-{}", model.as_str()), cfg.seed);
    let preds_path = l.predictions(model);
    rec.input(&preds_path, &format!("test predictions (run `eval --model {}` first)", model.as_str()))?;
    let rows = formats::read_predictions(&preds_path)?;
    let first = rows.first().ok_or_else(|| Error::format(&preds_path, "no predictions"))?;
    let patch_size = read_png(&dataset_root(cfg).join(&first.0.path))?.width();
    let mut by_patient: BTreeMap<String, Vec<(PatchRecord, ClassLabel)>> = BTreeMap::new();
    for row in rows {
        by_patient.entry(row.0.patient_id.clone()).or_default().push(row);
    }
    let dir = l.dir("maps").join(model.as_str());
    create_dir(&dir)?;
    let mut summary = BTreeMap::new();
    for (patient, rows) in by_patient {
        let records: Vec<PatchRecord> = rows.iter().map(|r| r.0.clone()).collect();
        let preds: Vec<ClassLabel> = rows.iter().map(|r| r.1).collect();
        let labels: Vec<ClassLabel> = records.iter().map(|r| r.label).collect();
        let map = reconstruct_prediction_map(&records, &preds, patch_size)?;
        let truth = reconstruct_prediction_map(&records, &labels, patch_size)?;
        let pred_png = dir.join(format!("{patient}.png"));
        let truth_png = dir.join(format!("{patient}_truth.png"));
        write_gray_png(&pred_png, map.width, map.height, &map.pixels)?;
        write_gray_png(&truth_png, truth.width, truth.height, &truth.pixels)?;
        rec.output(&pred_png)?;
        rec.output(&truth_png)?;
        let agree = preds.iter().zip(&labels).filter(|(p, t)| p == t).count();
        summary.insert(
            patient,
            PatientMap { patches: preds.len(), agreement: agree as f64 / preds.len() as f64, width: map.width, height: map.height },
        );
    }
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    rec.output(&summary_path)?;
    rec.finish()?;
    Ok(summary)
}

/// Result of [`run_supcon`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupconRun {
    pub encoder: VitEncoder,
    pub stage1: Stage1Outcome,
    pub stage2: Stage2Outcome,
    pub test_f1: f64,
}

/// Stage 1, feature extraction and stage 2 in memory, with validation F1
/// for model selection and test F1 reported alongside.
pub fn run_supcon(cfg: &RunConfig, data: &SplitImages, clock: &dyn Clock) -> Result<SupconRun> {
    let mut encoder = initial_encoder(cfg)?;
    let mut projector = ProjectionHead::new(ProjectionConfig::new(cfg.encoder.width), cfg.seed)?;
    let stage1 = train_stage1(
        &mut encoder,
        &mut projector,
        &data.train.images,
        &data.train.labels,
        &cfg.train.stage1,
        &cfg.loss,
        &cfg.augment,
        cfg.seed,
        clock,
        |_| {},
    )?;
    let features = |d: &Labeled| extract_features(&encoder, &d.images);
    let (tr, va, te) = (features(&data.train)?, features(&data.val)?, features(&data.test)?);
    let stage2 = train_stage2(&tr, &data.train.labels, &va, &data.val.labels, &cfg.train.stage2, cfg.seed, clock, |_| {})?;
    let test_f1 = supcon_core::eval::f1_score(&stage2.classifier.predict(&te)?, &data.test.labels)?;
    Ok(SupconRun { encoder, stage1, stage2, test_f1 })
}

/// Loads the split manifest and every image it names.
pub fn load_split_images(cfg: &RunConfig) -> Result<SplitImages> {
    let path = layout(cfg).split_csv();
    require(&path, "split manifest (run `split` first)")?;
    SplitImages::load(&dataset_root(cfg), &formats::read_split_csv(&path)?)
}

/// Histories with the timing column cleared, for reproducibility checks.
pub fn without_timing(history: &[EpochRecord]) -> Vec<EpochRecord> {
    history.iter().map(|r| EpochRecord { wall_clock_s: 0.0, ..r.clone() }).collect()
}
