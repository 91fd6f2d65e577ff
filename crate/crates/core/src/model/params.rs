use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl TensorSpec {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    specs: Vec<TensorSpec>,
    data: Vec<f64>,
}

impl ParamStore {
    pub(crate) fn empty() -> Self {
        Self { specs: Vec::new(), data: Vec::new() }
    }

    /// Appends a zero-filled tensor and returns its range.
    pub(crate) fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> Range<usize> {
        let len = shape.iter().product();
        let offset = self.data.len();
        self.specs.push(TensorSpec { name: name.into(), shape: shape.to_vec(), offset, len });
        self.data.resize(offset + len, 0.0);
        offset..offset + len
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.data[s.range()])
    }

    pub(crate) fn slice(&self, r: &Range<usize>) -> &[f64] {
        &self.data[r.clone()]
    }

    pub(crate) fn fill_normal(&mut self, r: &Range<usize>, std: f64, rng: &mut rng::Rng) {
        for v in &mut self.data[r.clone()] {
            // truncated at two standard deviations
            let mut x = rng::normal(rng);
            while x.abs() > 2.0 {
                x = rng::normal(rng);
            }
            *v = x * std;
        }
    }

    pub(crate) fn fill_xavier(&mut self, r: &Range<usize>, fan_in: usize, fan_out: usize, rng: &mut rng::Rng) {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        for v in &mut self.data[r.clone()] {
            *v = rng::uniform_range(rng, -limit, limit);
        }
    }

    pub(crate) fn fill(&mut self, r: &Range<usize>, value: f64) {
        self.data[r.clone()].iter_mut().for_each(|v| *v = value);
    }

    /// Replaces all values, keeping the layout.
    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter values for a layout of {}",
                values.len(),
                self.data.len()
            )));
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    /// FNV-1a over the raw bit patterns; equal iff weights are bit-identical
    /// (up to hash collisions).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}
