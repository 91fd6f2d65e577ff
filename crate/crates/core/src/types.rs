//! Shared domain types and the two row-wise utilities every stage uses.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Rows whose Euclidean norm falls below this are treated as zero.
pub const ZERO_ROW_NORM: f64 = 1e-12;

/// Binary patch label; `Malignant` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    Benign = 0,
    Malignant = 1,
}

impl ClassLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_positive(self) -> bool {
        self == ClassLabel::Malignant
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ClassLabel::Benign),
            1 => Ok(ClassLabel::Malignant),
            other => Err(Error::InvalidValue(format!("class label {other} is not 0 or 1"))),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(l: ClassLabel) -> u8 {
        l as u8
    }
}

/// An RGB raster, channel-interleaved row-major (`[(y * width + x) * 3 + c]`),
/// values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl PatchImage {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ShapeMismatch(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height * Self::CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    /// Scales 8-bit RGB samples into `[0, 1]` by dividing by 255.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// Inverse of [`PatchImage::from_rgb8`] (round to nearest).
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| libm::roundf(v * 255.0) as u8).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * Self::CHANNELS + c]
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Builds an image from a per-pixel function, clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..Self::CHANNELS {
                    pixels.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self { width, height, pixels }
    }

    /// Bilinear resize with half-pixel centres: output pixel `o` samples the
    /// source at `(o + 0.5) * in / out - 0.5`, clamped to the border.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> PatchImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sample_axis = |o: usize, n_in: usize, n_out: usize| {
            let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
            let i0 = (libm::floor(s) as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, (s - i0 as f64).min(1.0) as f32)
        };
        let cols: Vec<_> = (0..width).map(|x| sample_axis(x, self.width, width)).collect();
        let rows: Vec<_> = (0..height).map(|y| sample_axis(y, self.height, height)).collect();
        Self::from_fn(width, height, |x, y, c| {
            let (x0, x1, fx) = cols[x];
            let (y0, y1, fy) = rows[y];
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

/// Divides every row by its Euclidean norm.
pub fn normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if !(norm >= ZERO_ROW_NORM) {
            return Err(Error::ZeroRow { row: i });
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// Gram matrix `z zᵀ`.
pub fn pairwise_dot(z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut out = Matrix::zeros(n, n);
    crate::tensor::gemm_nt(n, z.cols(), n, z.as_slice(), z.as_slice(), out.as_mut_slice(), 0.0);
    out
}

/// Binary confusion counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn normalize_examples() {
        let m = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let n = normalize_rows(&m).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15 && (n.get(0, 1) - 0.8).abs() < 1e-15);

        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(normalize_rows(&m).unwrap().as_slice(), &[1.0, 0.0, 0.0, 1.0]);

        let m = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert_eq!(normalize_rows(&m), Err(Error::ZeroRow { row: 0 }));
    }

    #[test]
    fn pairwise_dot_examples() {
        let eye = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(pairwise_dot(&eye).as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let s = 0.5f64.sqrt();
        let same = Matrix::from_rows(&[[s, s], [s, s]]).unwrap();
        for v in pairwise_dot(&same).as_slice() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn image_validation() {
        assert!(PatchImage::new(0, 1, vec![]).is_err());
        assert!(PatchImage::new(1, 1, vec![0.0, 0.5]).is_err());
        assert!(PatchImage::new(1, 1, vec![0.0, 0.5, 1.5]).is_err());
        let img = PatchImage::from_rgb8(1, 1, &[0, 128, 255]).unwrap();
        assert_eq!(img.to_rgb8(), vec![0, 128, 255]);
    }

    #[test]
    fn resize_keeps_constant_images_constant() {
        let img = PatchImage::from_fn(50, 50, |_, _, c| 0.2 + 0.1 * c as f32);
        let small = img.resize_bilinear(48, 48);
        assert_eq!((small.width(), small.height()), (48, 48));
        for (i, v) in small.pixels().iter().enumerate() {
            assert!((v - (0.2 + 0.1 * (i % 3) as f32)).abs() < 1e-6);
        }
    }

    #[test]
    fn labels_convert() {
        assert_eq!(ClassLabel::try_from(1).unwrap(), ClassLabel::Malignant);
        assert!(ClassLabel::try_from(2).is_err());
    }
}
