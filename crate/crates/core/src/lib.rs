//! Two-stage supervised-contrastive training for patch-based image
//! classifiers.
//!
//! Stage 1 trains a ViT encoder and a linear projection head under the
//! supervised contrastive loss on pairs of augmented views. Stage 2 freezes
//! the encoder and fits a linear classifier on its class-token
//! representation. The crate also carries the evaluation side: the binary
//! metric suite, PCA of embeddings and whole-slide prediction maps.
//!
//! Everything here is `no_std` + `alloc`. File formats, the CLI and the
//! patch loader live in the companion `supcon` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use tensor::Matrix;
pub use types::{normalize_rows, pairwise_dot, ClassLabel, ConfusionMatrix, PatchImage};
