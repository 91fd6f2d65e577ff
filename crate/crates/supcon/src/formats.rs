//! On-disk formats.
//!
//! * Split manifest: CSV `path,patient_id,x,y,label,split`.
//! * Ground-truth grids and prediction maps: binary PGM (`P5`, maxval 255).
//!   Truth grids hold one pixel per patch cell with the prediction-map
//!   palette (benign 200, malignant 60).
//! * Checkpoints: `<name>.bin` holding every parameter as little-endian
//!   `f64` in layout order, plus `<name>.json` describing it
//!   ([`CheckpointManifest`]).
//! * Embedding cache (`.emb`), little-endian:
//!
//!   | offset | size    | field                      |
//!   |--------|---------|----------------------------|
//!   | 0      | 4       | magic `SCEB`               |
//!   | 4      | 4       | version (`u32`, = 1)       |
//!   | 8      | 8       | rows `n` (`u64`)           |
//!   | 16     | 8       | columns `d` (`u64`)        |
//!   | 24     | 1       | labels present (0 or 1)    |
//!   | 25     | 4·n·d   | row-major `f32` values     |
//!   | …      | n       | labels (0/1), when present |
//!
//! * Histories: JSON lines, one [`EpochRecord`] per line.
//! * Predictions: CSV `path,patient_id,x,y,label,pred`.
//! * PCA scores: CSV `pc1,…,pck,label`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use supcon_core::data::{DatasetSplit, PatchRecord, SplitName};
use supcon_core::model::{
    ClassifierConfig, EncoderConfig, LinearClassifier, ParamStore, Parameterized, ProjectionConfig, ProjectionHead, TensorSpec,
    VitEncoder,
};
use supcon_core::train::EpochRecord;
use supcon_core::{ClassLabel, Matrix};

use crate::error::{Error, Result};
use crate::io::{read_bytes, read_json, sha256_bytes, write_bytes, write_json};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRow {
    path: String,
    patient_id: String,
    x: u32,
    y: u32,
    label: u8,
    split: String,
}

pub fn write_split_csv(path: &Path, split: &DatasetSplit) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for name in SplitName::ALL {
        for r in split.get(name) {
            w.serialize(SplitRow {
                path: r.path.clone(),
                patient_id: r.patient_id.clone(),
                x: r.x,
                y: r.y,
                label: r.label.as_u8(),
                split: name.as_str().into(),
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e))?;
    write_bytes(path, &bytes)
}

pub fn read_split_csv(path: &Path) -> Result<DatasetSplit> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let mut out = DatasetSplit::default();
    for row in r.deserialize::<SplitRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let label = ClassLabel::try_from(row.label).map_err(|e| Error::format(path, e))?;
        let split = SplitName::parse(&row.split).map_err(|e| Error::format(path, e))?;
        out.get_mut(split).push(PatchRecord { patient_id: row.patient_id, x: row.x, y: row.y, label, path: row.path });
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel buffer does not match dimensions");
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    write_bytes(path, &bytes)
}

/// Reads a binary 8-bit PGM; returns `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let bad = |why: &str| Error::format(path, format!("not a P5 PGM: {why}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("magic"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("dimensions"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval"));
    }
    let data = bytes.get(pos..).ok_or_else(|| bad("truncated"))?;
    if data.len() != w * h {
        return Err(bad("pixel count"));
    }
    Ok((w, h, data.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Encoder,
    Projection,
    Classifier,
}

pub const CHECKPOINT_FORMAT: &str = "supcon-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance recorded with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: String,
    /// Epoch the weights come from (the best epoch for early-stopped runs).
    pub epoch: usize,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub meta: CheckpointMeta,
    pub tensors: Vec<TensorSpec>,
    pub weights_file: String,
    pub weights_sha256: String,
}

fn blob_path(manifest_path: &Path) -> std::path::PathBuf {
    manifest_path.with_extension("bin")
}

fn save_params<C: Serialize>(path: &Path, kind: ModelKind, config: &C, meta: &CheckpointMeta, params: &ParamStore) -> Result<()> {
    let blob: Vec<u8> = params.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let blob_file = blob_path(path);
    write_bytes(&blob_file, &blob)?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind,
        config: serde_json::to_value(config).expect("config serializes"),
        meta: meta.clone(),
        tensors: params.specs().to_vec(),
        weights_file: blob_file.file_name().expect("blob has a file name").to_string_lossy().into_owned(),
        weights_sha256: sha256_bytes(&blob),
    };
    write_json(path, &manifest)
}

fn mismatch(path: &Path, reason: impl Into<String>) -> Error {
    Error::ManifestMismatch { path: path.to_path_buf(), reason: reason.into() }
}

/// Reads and checks a checkpoint, then copies its weights into `params`.
fn load_params<C: Serialize>(path: &Path, kind: ModelKind, expected: &C, params: &mut ParamStore) -> Result<CheckpointManifest> {
    if !path.exists() {
        return Err(Error::missing(path, "checkpoint not found"));
    }
    let manifest: CheckpointManifest = read_json(path)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(mismatch(path, format!("unsupported format {} v{}", manifest.format, manifest.version)));
    }
    if manifest.kind != kind {
        return Err(mismatch(path, format!("holds a {:?}, expected a {kind:?}", manifest.kind)));
    }
    let expected = serde_json::to_value(expected).expect("config serializes");
    if manifest.config != expected {
        return Err(mismatch(path, format!("config {} != expected {}", manifest.config, expected)));
    }
    if manifest.tensors != params.specs() {
        return Err(mismatch(path, "tensor layout differs"));
    }
    let blob_file = path.with_file_name(&manifest.weights_file);
    let blob = read_bytes(&blob_file)?;
    if sha256_bytes(&blob) != manifest.weights_sha256 {
        return Err(mismatch(&blob_file, "weights hash differs from manifest"));
    }
    if blob.len() != params.len() * 8 {
        return Err(mismatch(&blob_file, format!("{} bytes for {} parameters", blob.len(), params.len())));
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    params.load_flat(&values)?;
    Ok(manifest)
}

pub fn save_encoder(path: &Path, enc: &VitEncoder, meta: &CheckpointMeta) -> Result<()> {
    save_params(path, ModelKind::Encoder, enc.config(), meta, enc.params())
}

pub fn load_encoder(path: &Path, expected: &EncoderConfig) -> Result<(VitEncoder, CheckpointManifest)> {
    let mut enc = VitEncoder::new(*expected, 0)?;
    let manifest = load_params(path, ModelKind::Encoder, expected, enc.params_mut())?;
    Ok((enc, manifest))
}

pub fn save_projection(path: &Path, head: &ProjectionHead, meta: &CheckpointMeta) -> Result<()> {
    save_params(path, ModelKind::Projection, head.config(), meta, head.params())
}

pub fn load_projection(path: &Path, expected: &ProjectionConfig) -> Result<(ProjectionHead, CheckpointManifest)> {
    let mut head = ProjectionHead::new(*expected, 0)?;
    let manifest = load_params(path, ModelKind::Projection, expected, head.params_mut())?;
    Ok((head, manifest))
}

pub fn save_classifier(path: &Path, clf: &LinearClassifier, meta: &CheckpointMeta) -> Result<()> {
    save_params(path, ModelKind::Classifier, clf.config(), meta, clf.params())
}

pub fn load_classifier(path: &Path, expected: &ClassifierConfig) -> Result<(LinearClassifier, CheckpointManifest)> {
    let mut clf = LinearClassifier::zeros(*expected)?;
    let manifest = load_params(path, ModelKind::Classifier, expected, clf.params_mut())?;
    Ok((clf, manifest))
}

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SCEB";
pub const EMBEDDING_VERSION: u32 = 1;
const EMBEDDING_HEADER: usize = 25;

/// Writes features as `f32`. Values that are not exactly representable in
/// `f32` are rounded, so only `f32`-valued matrices round-trip bit-exactly
/// (which is what [`supcon_core::train::extract_features`] produces).
pub fn write_embeddings(path: &Path, x: &Matrix, labels: Option<&[ClassLabel]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::Core(supcon_core::Error::LengthMismatch { left: x.rows(), right: l.len() }));
        }
    }
    let mut bytes = Vec::with_capacity(EMBEDDING_HEADER + 4 * x.as_slice().len() + x.rows());
    bytes.extend_from_slice(EMBEDDING_MAGIC);
    bytes.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    bytes.push(labels.is_some() as u8);
    for v in x.as_slice() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if let Some(l) = labels {
        bytes.extend(l.iter().map(|c| c.as_u8()));
    }
    write_bytes(path, &bytes)
}

pub fn read_embeddings(path: &Path) -> Result<(Matrix, Option<Vec<ClassLabel>>)> {
    if !path.exists() {
        return Err(Error::missing(path, "embedding cache not found"));
    }
    let bytes = read_bytes(path)?;
    let bad = |why: String| Error::format(path, format!("embedding cache: {why}"));
    if bytes.len() < EMBEDDING_HEADER || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(bad("bad magic or short header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != EMBEDDING_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let has_labels = match bytes[24] {
        0 => false,
        1 => true,
        other => return Err(bad(format!("label flag {other}"))),
    };
    let body = n.checked_mul(d).and_then(|v| v.checked_mul(4)).ok_or_else(|| bad("size overflow".into()))?;
    let expect = EMBEDDING_HEADER + body + if has_labels { n } else { 0 };
    if bytes.len() != expect {
        return Err(bad(format!("{} bytes, header implies {expect}", bytes.len())));
    }
    let values = bytes[EMBEDDING_HEADER..EMBEDDING_HEADER + body]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let x = Matrix::new(n, d, values)?;
    let labels = if has_labels {
        let raw = &bytes[EMBEDDING_HEADER + body..];
        Some(raw.iter().map(|&b| ClassLabel::try_from(b).map_err(|e| bad(e.to_string()))).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok((x, labels))
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::new();
    for r in history {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(|e| Error::format(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub path: String,
    pub patient_id: String,
    pub x: u32,
    pub y: u32,
    pub label: u8,
    pub pred: u8,
}

pub fn write_predictions(path: &Path, records: &[PatchRecord], preds: &[ClassLabel]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (r, p) in records.iter().zip(preds) {
        w.serialize(PredictionRow {
            path: r.path.clone(),
            patient_id: r.patient_id.clone(),
            x: r.x,
            y: r.y,
            label: r.label.as_u8(),
            pred: p.as_u8(),
        })
        .map_err(|e| csv_err(path, e))?;
    }
    write_bytes(path, &w.into_inner().map_err(|e| Error::format(path, e))?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<(PatchRecord, ClassLabel)>> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize::<PredictionRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_err(path, e))?;
            let label = ClassLabel::try_from(row.label).map_err(|e| Error::format(path, e))?;
            let pred = ClassLabel::try_from(row.pred).map_err(|e| Error::format(path, e))?;
            Ok((PatchRecord { patient_id: row.patient_id, x: row.x, y: row.y, label, path: row.path }, pred))
        })
        .collect()
}

pub fn write_pca_csv(path: &Path, scores: &Matrix, labels: &[ClassLabel]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=scores.cols()).map(|i| format!("pc{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (row, label) in scores.iter_rows().zip(labels) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(label.as_u8().to_string());
        w.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    write_bytes(path, &w.into_inner().map_err(|e| Error::format(path, e))?)
}

pub fn read_pca_csv(path: &Path) -> Result<(Matrix, Vec<ClassLabel>)> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let k = r.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(1);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for i in 0..k {
            values.push(rec[i].parse::<f64>().map_err(|e| Error::format(path, e))?);
        }
        let l: u8 = rec[k].parse().map_err(|e: std::num::ParseIntError| Error::format(path, e))?;
        labels.push(ClassLabel::try_from(l).map_err(|e| Error::format(path, e))?);
    }
    Ok((Matrix::new(labels.len(), k, values)?, labels))
}

const SCATTER_SIZE: u32 = 480;
const BENIGN_RGB: [u8; 3] = [128, 64, 160];
const MALIGNANT_RGB: [u8; 3] = [240, 170, 30];

/// Two-colour scatter of the first two score columns (benign purple,
/// malignant amber) on a white canvas.
pub fn write_pca_png(path: &Path, scores: &Matrix, labels: &[ClassLabel]) -> Result<()> {
    if scores.cols() < 2 {
        return Err(Error::format(path, "scatter needs at least two components"));
    }
    let range = |c: usize| {
        let (lo, hi) = scores.iter_rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo, span)
    };
    let ((x0, xs), (y0, ys)) = (range(0), range(1));
    let mut img = image::RgbImage::from_pixel(SCATTER_SIZE, SCATTER_SIZE, image::Rgb([255, 255, 255]));
    let margin = 12.0;
    let usable = SCATTER_SIZE as f64 - 2.0 * margin;
    for (row, label) in scores.iter_rows().zip(labels) {
        let px = (margin + (row[0] - x0) / xs * usable) as i64;
        let py = (SCATTER_SIZE as f64 - margin - (row[1] - y0) / ys * usable) as i64;
        let color = image::Rgb(if label.is_positive() { MALIGNANT_RGB } else { BENIGN_RGB });
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (px + dx, py + dy);
                if (0..SCATTER_SIZE as i64).contains(&x) && (0..SCATTER_SIZE as i64).contains(&y) {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    if let Some(parent) = path.parent() {
        crate::io::create_dir(parent)?;
    }
    img.save(path).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use supcon_core::model::EncoderConfig;
    use supcon_core::train::NoClock;
    use ClassLabel::{Benign as B, Malignant as M};

    fn rec(p: &str, x: u32, label: ClassLabel) -> PatchRecord {
        PatchRecord { patient_id: p.into(), x, y: 0, label, path: format!("{p}/{p}_x{x}_y0_class{}.png", label.as_u8()) }
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta { stage: "stage1".into(), epoch: 3, seed: 9, history: vec![] }
    }

    #[test]
    fn split_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.csv");
        let split = DatasetSplit { train: vec![rec("a", 0, B), rec("a", 50, M)], val: vec![rec("b", 0, B)], test: vec![rec("c", 0, M)] };
        write_split_csv(&path, &split).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("path,patient_id,x,y,label,split\n"));
        assert_eq!(read_split_csv(&path).unwrap(), split);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let px: Vec<u8> = (0..12).map(|i| i * 20).collect();
        write_pgm(&path, 4, 3, &px).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), (4, 3, px));
        write_bytes(&path, b"P2\n1 1\n255\n0").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn encoder_checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("encoder.json");
        let cfg = EncoderConfig { input_size: 16, patch_size: 8, depth: 1, width: 8, heads: 2, mlp_ratio: 2 };
        let enc = VitEncoder::new(cfg, 5).unwrap();
        let mut m = meta();
        m.history.push(EpochRecord { epoch: 1, split: "train".into(), loss: 1.5, f1: None, val_loss: None, lr: 1e-3, wall_clock_s: 0.0 });
        save_encoder(&path, &enc, &m).unwrap();
        let (loaded, manifest) = load_encoder(&path, &cfg).unwrap();
        assert_eq!(loaded.params().fingerprint(), enc.params().fingerprint());
        assert_eq!(manifest.meta, m);
        let imgs = vec![supcon_core::PatchImage::from_fn(20, 20, |x, y, c| ((x * y + c) % 7) as f32 / 6.0)];
        let encode = |e: &VitEncoder| supcon_core::train::extract_features(e, &imgs).unwrap();
        assert_eq!(encode(&loaded), encode(&enc));
        let _ = NoClock;

        let wider = EncoderConfig { width: 16, ..cfg };
        assert!(matches!(load_encoder(&path, &wider), Err(Error::ManifestMismatch { .. })));
        assert!(matches!(load_classifier(&path, &ClassifierConfig::new(8)), Err(Error::ManifestMismatch { .. })));
        assert!(matches!(load_encoder(&dir.path().join("nope.json"), &cfg), Err(Error::MissingArtifact { .. })));
    }

    #[test]
    fn tampered_blob_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.json");
        let clf = LinearClassifier::new(ClassifierConfig::new(4), 1).unwrap();
        save_classifier(&path, &clf, &meta()).unwrap();
        let (back, _) = load_classifier(&path, &ClassifierConfig::new(4)).unwrap();
        assert_eq!(back, clf);
        let mut blob = std::fs::read(path.with_extension("bin")).unwrap();
        blob[0] ^= 1;
        std::fs::write(path.with_extension("bin"), blob).unwrap();
        assert!(matches!(load_classifier(&path, &ClassifierConfig::new(4)), Err(Error::ManifestMismatch { .. })));
    }

    #[test]
    fn projection_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proj.json");
        let cfg = ProjectionConfig::new(8);
        let head = ProjectionHead::new(cfg, 2).unwrap();
        save_projection(&path, &head, &meta()).unwrap();
        assert_eq!(load_projection(&path, &cfg).unwrap().0.params().data(), head.params().data());
    }

    #[test]
    fn embedding_cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.emb");
        let x = Matrix::new(3, 2, vec![0.5, -1.25, 3.0f32 as f64, (0.1f32) as f64, 0.0, 7.0]).unwrap();
        let labels = vec![B, M, B];
        write_embeddings(&path, &x, Some(&labels)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SCEB");
        assert_eq!(bytes.len(), 25 + 4 * 6 + 3);
        let (back, back_labels) = read_embeddings(&path).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&x));
        assert_eq!(back_labels.unwrap(), labels);

        write_embeddings(&path, &x, None).unwrap();
        assert_eq!(read_embeddings(&path).unwrap().1, None);
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_embeddings(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let h = vec![
            EpochRecord { epoch: 1, split: "val".into(), loss: 0.7, f1: Some(0.5), val_loss: Some(0.6), lr: 0.01, wall_clock_s: 1.5 },
            EpochRecord { epoch: 2, split: "val".into(), loss: 0.6, f1: Some(0.55), val_loss: Some(0.58), lr: 0.01, wall_clock_s: 3.0 },
        ];
        write_history(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["epoch", "split", "loss", "f1", "lr", "wall_clock_s"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert_eq!(read_history(&path).unwrap(), h);
    }

    #[test]
    fn pca_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pca.csv");
        let scores = Matrix::new(3, 2, vec![0.1, -0.2, 1.0 / 3.0, 2.5, -7.0, 0.0]).unwrap();
        let labels = vec![B, M, M];
        write_pca_csv(&path, &scores, &labels).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap(), "pc1,pc2,label");
        let (back, back_labels) = read_pca_csv(&path).unwrap();
        assert_eq!(back_labels, labels);
        for (a, b) in back.as_slice().iter().zip(scores.as_slice()) {
            assert!((a - b).abs() <= 1e-6);
        }
        write_pca_png(&dir.path().join("pca.png"), &scores, &labels).unwrap();
        let img = image::open(dir.path().join("pca.png")).unwrap().to_rgb8();
        assert!(img.pixels().any(|p| p.0 == BENIGN_RGB) && img.pixels().any(|p| p.0 == MALIGNANT_RGB));
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let recs = vec![rec("a", 0, B), rec("a", 50, M)];
        write_predictions(&path, &recs, &[M, M]).unwrap();
        let back = read_predictions(&path).unwrap();
        assert_eq!(back, vec![(recs[0].clone(), M), (recs[1].clone(), M)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cache() -> impl Strategy<Value = (usize, usize, Vec<f32>, Vec<bool>)> {
            (0usize..6, 1usize..5).prop_flat_map(|(n, d)| {
                (Just(n), Just(d), prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO, n * d), prop::collection::vec(any::<bool>(), n))
            })
        }

        proptest! {
            #[test]
            fn embeddings_round_trip_any_f32((n, d, vals, flags) in cache()) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("p.emb");
                let x = Matrix::new(n, d, vals.iter().map(|&v| v as f64).collect()).unwrap();
                let labels: Vec<ClassLabel> = flags.iter().map(|&f| if f { M } else { B }).collect();
                write_embeddings(&path, &x, Some(&labels)).unwrap();
                let (back, back_labels) = read_embeddings(&path).unwrap();
                prop_assert_eq!(back.as_slice(), x.as_slice());
                prop_assert_eq!(back_labels.unwrap(), labels);
            }

            #[test]
            fn pgm_round_trips_any_raster(w in 1usize..20, h in 1usize..20, seed in any::<u8>()) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("p.pgm");
                let pixels: Vec<u8> = (0..w * h).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
                write_pgm(&path, w, h, &pixels).unwrap();
                prop_assert_eq!(read_pgm(&path).unwrap(), (w, h, pixels));
            }
        }
    }
}
