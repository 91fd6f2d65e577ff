//! Encoder, projection head and linear classifier.
//!
//! All weights live in flat [`ParamStore`]s: one contiguous `Vec<f64>` plus a
//! table of named tensors. Gradients are plain vectors of the same length,
//! which keeps the optimizer and the checkpoint format model-agnostic.

mod heads;
mod params;
mod vit;

pub use heads::{ClassifierConfig, LinearClassifier, ProjectionConfig, ProjectionHead, ProjectionTrace};
pub use params::{ParamStore, TensorSpec};
pub use vit::{EncoderConfig, VitEncoder, VitTrace};

use crate::error::Result;
use crate::tensor::Matrix;
use crate::types::PatchImage;

/// Anything that maps a batch of patches to representation rows.
///
/// The toy [`VitEncoder`] implements it; pretrained weights are imported
/// into a `VitEncoder` with a matching [`EncoderConfig`] through
/// [`VitEncoder::from_named_tensors`].
pub trait Encoder {
    fn width(&self) -> usize;

    /// Inference-mode representations, one row per image.
    fn encode(&self, images: &[PatchImage]) -> Result<Matrix>;
}

/// Models with trainable parameters.
pub trait Parameterized {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}
