//! Seeded randomness.
//!
//! Every stochastic step in the crate draws from a ChaCha8 generator. The
//! conversions from raw `u64` words to the values we consume are defined
//! here rather than borrowed from `rand`, so draw sequences can be traced by
//! hand and stay fixed across dependency upgrades:
//!
//! * uniform `[0, 1)`: `(next_u64() >> 11) as f64 * 2^-53`
//! * integer in `0..=i` (Fisher-Yates): `next_u64() % (i + 1)`
//! * normal: Box-Muller on two uniforms, cosine branch only
//!
//! Streams: `derive_stream(seed, id)` seeds ChaCha8 with `seed` and selects
//! stream `id`. Independent consumers (weight init, shuffling, augmentation,
//! per-worker generators) use distinct stream ids of one master seed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub use rand_chacha::ChaCha8Rng as Rng;

/// Stream ids used by the training code.
pub mod streams {
    pub const INIT_ENCODER: u64 = 1;
    pub const INIT_HEADS: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const DATA: u64 = 5;
    /// Workers get `WORKER_BASE + worker_index`.
    pub const WORKER_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform_range<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

pub fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    uniform(rng) < p
}

pub fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// In-place Fisher-Yates shuffle, walking from the back.
pub fn shuffle<T, R: RngCore + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}
