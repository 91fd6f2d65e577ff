//! Patch records, patient-level splitting, class counts and the synthetic
//! patch generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{ClassLabel, PatchImage};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patient_id: String,
    pub x: u32,
    pub y: u32,
    pub label: ClassLabel,
    /// File reference, relative to the dataset root when loaded from disk.
    pub path: String,
}

impl PatchRecord {
    fn sort_key(&self) -> (&str, u32, u32) {
        (&self.patient_id, self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedName {
    pub patient_id: String,
    pub x: u32,
    pub y: u32,
    pub label: ClassLabel,
    pub extension: String,
}

/// Parses `<patient>_x<uint>_y<uint>_class<0|1>.<ext>`.
///
/// The coordinate/class suffix is matched from the right, so patient ids may
/// contain underscores (`8863_idx5_x51_y1251_class0.png` is patient
/// `8863_idx5`).
pub fn parse_patch_filename(name: &str) -> Result<ParsedName> {
    let malformed = || Error::MalformedName(name.to_string());
    let file = name.rsplit(['/', '\\']).next().unwrap_or(name);
    let (stem, ext) = file.rsplit_once('.').ok_or_else(malformed)?;
    if ext.is_empty() {
        return Err(malformed());
    }
    let (rest, class) = stem.rsplit_once("_class").ok_or_else(malformed)?;
    let label = match class {
        "0" => ClassLabel::Benign,
        "1" => ClassLabel::Malignant,
        _ => return Err(malformed()),
    };
    let (rest, y) = rest.rsplit_once("_y").ok_or_else(malformed)?;
    let (patient, x) = rest.rsplit_once("_x").ok_or_else(malformed)?;
    let uint = |s: &str| -> Result<u32> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        s.parse().map_err(|_| malformed())
    };
    let (x, y) = (uint(x)?, uint(y)?);
    if patient.is_empty() {
        return Err(malformed());
    }
    Ok(ParsedName { patient_id: patient.to_string(), x, y, label, extension: ext.to_string() })
}

/// Sorts by `(patient_id, x, y)` and rejects empty sets and duplicate
/// coordinates.
pub fn finalize_records(mut records: Vec<PatchRecord>) -> Result<Vec<PatchRecord>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.path.cmp(&b.path)));
    for pair in records.windows(2) {
        if pair[0].sort_key() == pair[1].sort_key() {
            return Err(Error::DuplicateCoordinate {
                patient_id: pair[0].patient_id.clone(),
                x: pair[0].x,
                y: pair[0].y,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub n_train_patients: usize,
    pub n_val_patients: usize,
    pub n_test_patients: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    /// Fits the default synthetic set of 10 patients.
    fn default() -> Self {
        Self::new(5, 2, 3, 0)
    }
}

impl SplitSpec {
    pub fn new(train: usize, val: usize, test: usize, seed: u64) -> Self {
        Self { n_train_patients: train, n_val_patients: val, n_test_patients: test, seed }
    }

    pub fn total(&self) -> usize {
        self.n_train_patients + self.n_val_patients + self.n_test_patients
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("split.n_train_patients", self.n_train_patients),
            ("split.n_val_patients", self.n_val_patients),
            ("split.n_test_patients", self.n_test_patients),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig { field: field.into(), reason: "must be >= 1".into() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidValue(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplit {
    pub train: Vec<PatchRecord>,
    pub val: Vec<PatchRecord>,
    pub test: Vec<PatchRecord>,
}

impl DatasetSplit {
    pub fn get(&self, name: SplitName) -> &[PatchRecord] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, name: SplitName) -> &mut Vec<PatchRecord> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Val => &mut self.val,
            SplitName::Test => &mut self.test,
        }
    }
}

/// Distinct patient ids in lexicographic order.
pub fn patients(records: &[PatchRecord]) -> Vec<String> {
    records.iter().map(|r| r.patient_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Patient-level split.
///
/// Distinct patient ids are sorted, shuffled with [`rng::shuffle`] on
/// `rng::seeded(spec.seed)`, and the first `n_train` go to train, the next
/// `n_val` to val and the rest to test. Every patch follows its patient;
/// within a split records keep their input order.
pub fn split_dataset(records: &[PatchRecord], spec: &SplitSpec) -> Result<DatasetSplit> {
    let mut ids = patients(records);
    if ids.len() != spec.total() {
        return Err(Error::PatientCountMismatch { expected: spec.total(), found: ids.len() });
    }
    rng::shuffle(&mut ids, &mut rng::seeded(spec.seed));
    let mut assignment = BTreeMap::new();
    for (i, id) in ids.into_iter().enumerate() {
        let split = if i < spec.n_train_patients {
            SplitName::Train
        } else if i < spec.n_train_patients + spec.n_val_patients {
            SplitName::Val
        } else {
            SplitName::Test
        };
        assignment.insert(id, split);
    }
    let mut out = DatasetSplit::default();
    for r in records {
        out.get_mut(assignment[&r.patient_id]).push(r.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub benign: u64,
    pub malignant: u64,
}

impl ClassCounts {
    pub fn of(records: &[PatchRecord]) -> Self {
        let malignant = records.iter().filter(|r| r.label.is_positive()).count() as u64;
        Self { benign: records.len() as u64 - malignant, malignant }
    }

    pub fn total(&self) -> u64 {
        self.benign + self.malignant
    }

    /// (benign, malignant) fractions; zeros for an empty set.
    pub fn fractions(&self) -> (f64, f64) {
        let t = self.total();
        if t == 0 {
            (0.0, 0.0)
        } else {
            (self.benign as f64 / t as f64, self.malignant as f64 / t as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: ClassCounts,
    pub val: ClassCounts,
    pub test: ClassCounts,
    pub total: ClassCounts,
}

pub fn dataset_stats(split: &DatasetSplit) -> SplitStats {
    let train = ClassCounts::of(&split.train);
    let val = ClassCounts::of(&split.val);
    let test = ClassCounts::of(&split.test);
    let total = ClassCounts { benign: train.benign + val.benign + test.benign, malignant: train.malignant + val.malignant + test.malignant };
    SplitStats { train, val, test, total }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_patients: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub patch_size: usize,
    pub class_texture_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n_patients: 10, grid_w: 12, grid_h: 10, patch_size: 50, class_texture_separation: 0.8, seed: 0 }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("data.synthetic.n_patients", self.n_patients),
            ("data.synthetic.grid_w", self.grid_w),
            ("data.synthetic.grid_h", self.grid_h),
            ("data.synthetic.patch_size", self.patch_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig { field: field.into(), reason: "must be >= 1".into() });
            }
        }
        let s = self.class_texture_separation;
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "data.synthetic.class_texture_separation".into(),
                reason: format!("{s} outside (0, 1]"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatch {
    pub x: u32,
    pub y: u32,
    pub label: ClassLabel,
    pub image: PatchImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Row-major `grid_h x grid_w`; cell `(i, j)` is the patch at
    /// `(i * patch_size, j * patch_size)`.
    pub label_grid: Vec<ClassLabel>,
    pub patches: Vec<SyntheticPatch>,
}

/// Fraction of cells labelled malignant in each synthetic patient.
pub const SYNTHETIC_MALIGNANT_FRACTION: f64 = 0.28;

/// Deterministic stand-in for a patch corpus.
///
/// Per patient (generator stream `1000 + patient index` of `cfg.seed`):
///
/// * Labels: white noise on the grid, box-blurred twice (3x3, clamped
///   edges), then the top [`SYNTHETIC_MALIGNANT_FRACTION`] of cells become
///   malignant. Neighbouring cells are therefore correlated.
/// * Patches: pink tissue with pixel noise and a small per-patient hue
///   shift (channel offsets summing to zero), overlaid with dark soft-edged nuclei. The nucleus count is
///   Poisson with mean `14 ± 10·s` (malignant `+`, benign `−`) for
///   separation `s`. Each patch also gets an additive brightness offset,
///   uniform in `±0.6·(1 − s)`, which is what keeps raw intensity from
///   being a clean cue below `s = 1`.
///
/// Images are quantised to 8 bits so writing and re-reading them as PNG is
/// lossless.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<SyntheticPatient>> {
    cfg.validate()?;
    let width_digits = cfg.n_patients.saturating_sub(1).to_string().len().max(2);
    (0..cfg.n_patients)
        .map(|p| {
            let mut rng = rng::derive_stream(cfg.seed, 1000 + p as u64);
            let id = format!("syn{p:0width_digits$}");
            generate_patient(cfg, id, &mut rng)
        })
        .collect()
}

fn box_blur(field: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let ii = (i as i64 + di).clamp(0, w as i64 - 1) as usize;
                    let jj = (j as i64 + dj).clamp(0, h as i64 - 1) as usize;
                    acc += field[jj * w + ii];
                }
            }
            out[j * w + i] = acc / 9.0;
        }
    }
    out
}

fn poisson(rng: &mut rng::Rng, mean: f64) -> usize {
    let limit = libm::exp(-mean);
    let mut k = 0;
    let mut p = rng::uniform(rng);
    while p > limit {
        k += 1;
        p *= rng::uniform(rng);
    }
    k
}

fn generate_patient(cfg: &SyntheticConfig, patient_id: String, rng: &mut rng::Rng) -> Result<SyntheticPatient> {
    let (gw, gh, ps) = (cfg.grid_w, cfg.grid_h, cfg.patch_size);
    let s = cfg.class_texture_separation;

    let noise: Vec<f64> = (0..gw * gh).map(|_| rng::normal(rng)).collect();
    let field = box_blur(&box_blur(&noise, gw, gh), gw, gh);
    let mut order: Vec<usize> = (0..field.len()).collect();
    order.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
    let n_malignant = libm::round(SYNTHETIC_MALIGNANT_FRACTION * field.len() as f64) as usize;
    let mut label_grid = vec![ClassLabel::Benign; field.len()];
    for &cell in &order[..n_malignant] {
        label_grid[cell] = ClassLabel::Malignant;
    }

    // Hue-only stain shift: the channel offsets sum to zero.
    let (sa, sb) = (rng::uniform_range(rng, -0.04, 0.04), rng::uniform_range(rng, -0.04, 0.04));
    let stain = [sa, sb, -(sa + sb)];
    let tissue = [0.90, 0.70, 0.82];
    let nucleus = [0.35, 0.18, 0.50];
    let jitter = 0.6 * (1.0 - s);

    let mut patches = Vec::with_capacity(gw * gh);
    for j in 0..gh {
        for i in 0..gw {
            let label = label_grid[j * gw + i];
            let sign = if label.is_positive() { 1.0 } else { -1.0 };
            let count = poisson(rng, 14.0 + sign * 10.0 * s);
            let nuclei: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    let cx = rng::uniform_range(rng, 0.0, ps as f64);
                    let cy = rng::uniform_range(rng, 0.0, ps as f64);
                    let r = rng::uniform_range(rng, 2.0, 3.5);
                    (cx, cy, r)
                })
                .collect();
            let offset = rng::uniform_range(rng, -jitter, jitter);
            let mut bytes = Vec::with_capacity(ps * ps * 3);
            for y in 0..ps {
                for x in 0..ps {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut alpha: f64 = 0.0;
                    for &(cx, cy, r) in &nuclei {
                        let d = libm::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
                        alpha = alpha.max((r + 0.5 - d).clamp(0.0, 1.0));
                    }
                    let grain = 0.03 * rng::normal(rng);
                    for c in 0..3 {
                        let base = tissue[c] + stain[c] + grain;
                        let v = base * (1.0 - alpha) + nucleus[c] * alpha + offset;
                        bytes.push(libm::round(v.clamp(0.0, 1.0) * 255.0) as u8);
                    }
                }
            }
            let image = PatchImage::from_rgb8(ps, ps, &bytes)?;
            patches.push(SyntheticPatch { x: (i * ps) as u32, y: (j * ps) as u32, label, image });
        }
    }
    Ok(SyntheticPatient { patient_id, grid_w: gw, grid_h: gh, label_grid, patches })
}

/// File name following the patch grammar.
pub fn patch_file_name(patient_id: &str, x: u32, y: u32, label: ClassLabel) -> String {
    format!("{patient_id}_x{x}_y{y}_class{}.png", label.as_u8())
}
