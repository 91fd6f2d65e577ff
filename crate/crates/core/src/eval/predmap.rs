//! Whole-slide prediction maps: per-patch predictions painted back at their
//! slide coordinates as an 8-bit grayscale raster (darker = malignant).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::PatchRecord;
use crate::error::{Error, Result};
use crate::types::ClassLabel;

pub const BENIGN_LEVEL: u8 = 200;
pub const MALIGNANT_LEVEL: u8 = 60;
pub const BACKGROUND_LEVEL: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionMap {
    pub patient_id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` bytes.
    pub pixels: Vec<u8>,
    /// `(x, y, prediction)` for every placed patch, in input order.
    pub placed: Vec<(u32, u32, ClassLabel)>,
}

impl PredictionMap {
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

pub fn level_for(label: ClassLabel) -> u8 {
    match label {
        ClassLabel::Benign => BENIGN_LEVEL,
        ClassLabel::Malignant => MALIGNANT_LEVEL,
    }
}

/// Paints `patch_size` squares for the records of one patient. The raster is
/// `(max_x + patch_size) x (max_y + patch_size)`, background 255.
pub fn reconstruct_prediction_map(records: &[PatchRecord], preds: &[ClassLabel], patch_size: usize) -> Result<PredictionMap> {
    if records.len() != preds.len() {
        return Err(Error::LengthMismatch { left: records.len(), right: preds.len() });
    }
    let first = records.first().ok_or(Error::EmptyDataset)?;
    if patch_size == 0 {
        return Err(Error::InvalidValue("patch size must be >= 1".into()));
    }
    if let Some(other) = records.iter().find(|r| r.patient_id != first.patient_id) {
        return Err(Error::MixedPatients(first.patient_id.clone(), other.patient_id.clone()));
    }
    let width = records.iter().map(|r| r.x as usize).max().unwrap_or(0) + patch_size;
    let height = records.iter().map(|r| r.y as usize).max().unwrap_or(0) + patch_size;
    let mut pixels = vec![BACKGROUND_LEVEL; width * height];
    let mut covered = vec![false; width * height];
    let mut placed = Vec::with_capacity(records.len());
    for (rec, &pred) in records.iter().zip(preds) {
        let level = level_for(pred);
        for dy in 0..patch_size {
            for dx in 0..patch_size {
                let (x, y) = (rec.x as usize + dx, rec.y as usize + dy);
                let at = y * width + x;
                if covered[at] {
                    return Err(Error::Overlap { x: x as u32, y: y as u32 });
                }
                covered[at] = true;
                pixels[at] = level;
            }
        }
        placed.push((rec.x, rec.y, pred));
    }
    Ok(PredictionMap { patient_id: first.patient_id.clone(), width, height, pixels, placed })
}
