//! Flip-based two-view augmentation and the optional colour policy.
//!
//! Draw order for one view (all from the same generator, see [`crate::rng`]):
//!
//! 1. vertical flip: `uniform < flip_prob`
//! 2. horizontal flip: `uniform < flip_prob`
//! 3. `flips+color` only: jitter gate `uniform < jitter_prob`; when it fires,
//!    three more uniforms give the brightness, contrast and saturation
//!    factors (applied in that order); then the grayscale gate
//!    `uniform < grayscale_prob`.
//!
//! [`two_view`] consumes all of view A's draws before view B's.

use alloc::format;
use alloc::string::String;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::PatchImage;

pub const POLICY_FLIPS: &str = "flips";
pub const POLICY_FLIPS_COLOR: &str = "flips+color";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub name: String,
    pub flip_prob: f64,
    pub jitter_prob: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub grayscale_prob: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::flips()
    }
}

impl AugmentPolicy {
    /// Random vertical and horizontal flips, each with probability 0.5.
    pub fn flips() -> Self {
        Self {
            name: POLICY_FLIPS.into(),
            flip_prob: 0.5,
            jitter_prob: 0.8,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            grayscale_prob: 0.2,
        }
    }

    /// Flips followed by colour jitter and random grayscale.
    pub fn flips_color() -> Self {
        Self { name: POLICY_FLIPS_COLOR.into(), ..Self::flips() }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            POLICY_FLIPS => Ok(Self::flips()),
            POLICY_FLIPS_COLOR => Ok(Self::flips_color()),
            other => Err(Error::UnknownPolicy(other.into())),
        }
    }

    pub fn uses_color(&self) -> bool {
        self.name == POLICY_FLIPS_COLOR
    }

    pub fn validate(&self) -> Result<()> {
        if self.name != POLICY_FLIPS && self.name != POLICY_FLIPS_COLOR {
            return Err(Error::UnknownPolicy(self.name.clone()));
        }
        let probs = [
            ("augment.flip_prob", self.flip_prob),
            ("augment.jitter_prob", self.jitter_prob),
            ("augment.grayscale_prob", self.grayscale_prob),
        ];
        for (field, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig { field: field.into(), reason: format!("probability {p} outside [0, 1]") });
            }
        }
        let ranges = [
            ("augment.brightness", self.brightness),
            ("augment.contrast", self.contrast),
            ("augment.saturation", self.saturation),
        ];
        for (field, r) in ranges {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig { field: field.into(), reason: format!("jitter range {r} outside [0, 1]") });
            }
        }
        Ok(())
    }
}

/// Mirrors left-right (about the vertical axis).
pub fn hflip(img: &PatchImage) -> PatchImage {
    let w = img.width();
    PatchImage::from_fn(w, img.height(), |x, y, c| img.get(w - 1 - x, y, c))
}

/// Mirrors top-bottom (about the horizontal axis).
pub fn vflip(img: &PatchImage) -> PatchImage {
    let h = img.height();
    PatchImage::from_fn(img.width(), h, |x, y, c| img.get(x, h - 1 - y, c))
}

fn luma(img: &PatchImage, x: usize, y: usize) -> f32 {
    0.299 * img.get(x, y, 0) + 0.587 * img.get(x, y, 1) + 0.114 * img.get(x, y, 2)
}

fn grayscale(img: &PatchImage) -> PatchImage {
    PatchImage::from_fn(img.width(), img.height(), |x, y, _| luma(img, x, y))
}

fn jitter(img: &PatchImage, brightness: f32, contrast: f32, saturation: f32) -> PatchImage {
    let bright = PatchImage::from_fn(img.width(), img.height(), |x, y, c| img.get(x, y, c) * brightness);
    let n = (bright.width() * bright.height()) as f32;
    let mut mean = 0.0;
    for y in 0..bright.height() {
        for x in 0..bright.width() {
            mean += luma(&bright, x, y);
        }
    }
    mean /= n;
    let contr = PatchImage::from_fn(bright.width(), bright.height(), |x, y, c| {
        mean + (bright.get(x, y, c) - mean) * contrast
    });
    PatchImage::from_fn(contr.width(), contr.height(), |x, y, c| {
        let g = luma(&contr, x, y);
        g + (contr.get(x, y, c) - g) * saturation
    })
}

/// One stochastic view of `img`.
pub fn augment_view<R: RngCore + ?Sized>(img: &PatchImage, policy: &AugmentPolicy, rng: &mut R) -> PatchImage {
    let do_v = rng::bernoulli(rng, policy.flip_prob);
    let do_h = rng::bernoulli(rng, policy.flip_prob);
    let mut out = match (do_v, do_h) {
        (false, false) => img.clone(),
        (true, false) => vflip(img),
        (false, true) => hflip(img),
        (true, true) => hflip(&vflip(img)),
    };
    if policy.uses_color() {
        if rng::bernoulli(rng, policy.jitter_prob) {
            let factor = |r: f64, rng: &mut R| rng::uniform_range(rng, 1.0 - r, 1.0 + r) as f32;
            let b = factor(policy.brightness, rng);
            let c = factor(policy.contrast, rng);
            let s = factor(policy.saturation, rng);
            out = jitter(&out, b, c, s);
        }
        if rng::bernoulli(rng, policy.grayscale_prob) {
            out = grayscale(&out);
        }
    }
    out
}

/// Two independently augmented views; view A draws first.
pub fn two_view<R: RngCore + ?Sized>(img: &PatchImage, policy: &AugmentPolicy, rng: &mut R) -> (PatchImage, PatchImage) {
    let a = augment_view(img, policy, rng);
    let b = augment_view(img, policy, rng);
    (a, b)
}
