//! A small pre-norm Vision Transformer with hand-written backward pass.
//!
//! Images are resized to `input_size` (bilinear, see
//! [`PatchImage::resize_bilinear`]), mapped to `[-1, 1]`, cut into
//! non-overlapping `patch_size` squares and linearly embedded. A learned
//! class token is prepended, learned position embeddings added, then `depth`
//! blocks of
//!
//! ```text
//! x = x + Attn(LN1(x))
//! x = x + MLP(LN2(x))      MLP = fc2(GELU(fc1(.)))
//! ```
//!
//! The representation is the final LayerNorm of the class token.
//!
//! Token rows of all images in a batch are stacked into one
//! `(batch * tokens) x width` matrix so the linear layers run as single
//! products; attention is computed per image and head on strided views.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::{Encoder, Parameterized};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{add_col_sums, add_row_bias, gemm_nn, gemm_nt, gemm_strided, gemm_tn, Matrix};
use crate::types::PatchImage;

const LN_EPS: f64 = 1e-6;
const CHANNELS: usize = PatchImage::CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub input_size: usize,
    pub patch_size: usize,
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl EncoderConfig {
    /// Desk-scale encoder trained from scratch.
    pub fn toy() -> Self {
        Self { input_size: 48, patch_size: 8, depth: 4, width: 64, heads: 4, mlp_ratio: 4 }
    }

    /// ViT-Base/16 geometry, for imported pretrained weights.
    pub fn vit_base() -> Self {
        Self { input_size: 224, patch_size: 16, depth: 12, width: 768, heads: 12, mlp_ratio: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: alloc::string::String| {
            Err(Error::InvalidConfig { field: format!("encoder.{field}"), reason })
        };
        if self.patch_size == 0 || self.input_size == 0 || self.input_size % self.patch_size != 0 {
            return bad("patch_size", format!("{} must divide input_size {}", self.patch_size, self.input_size));
        }
        if self.depth == 0 {
            return bad("depth", "must be >= 1".into());
        }
        if self.heads == 0 || self.width == 0 || self.width % self.heads != 0 {
            return bad("heads", format!("{} must divide width {}", self.heads, self.width));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio", "must be >= 1".into());
        }
        Ok(())
    }

    pub fn patches_per_side(&self) -> usize {
        self.input_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.patches_per_side() * self.patches_per_side()
    }

    /// Patch tokens plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * CHANNELS
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn hidden(&self) -> usize {
        self.width * self.mlp_ratio
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: Range<usize>,
    b: Range<usize>,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone)]
struct Norm {
    g: Range<usize>,
    b: Range<usize>,
}

#[derive(Debug, Clone)]
struct Block {
    ln1: Norm,
    qkv: Linear,
    proj: Linear,
    ln2: Norm,
    fc1: Linear,
    fc2: Linear,
}

#[derive(Debug, Clone)]
struct Layout {
    patch: Linear,
    cls: Range<usize>,
    pos: Range<usize>,
    blocks: Vec<Block>,
    norm: Norm,
}

fn add_linear(p: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Linear {
    let w = p.add(format!("{name}.weight"), &[fan_in, fan_out]);
    let b = p.add(format!("{name}.bias"), &[fan_out]);
    Linear { w, b, fan_in, fan_out }
}

fn add_norm(p: &mut ParamStore, name: &str, width: usize) -> Norm {
    let g = p.add(format!("{name}.weight"), &[width]);
    let b = p.add(format!("{name}.bias"), &[width]);
    Norm { g, b }
}

fn build_layout(cfg: &EncoderConfig) -> (ParamStore, Layout) {
    let w = cfg.width;
    let mut p = ParamStore::empty();
    let patch = add_linear(&mut p, "patch_embed", cfg.patch_dim(), w);
    let cls = p.add("cls_token", &[w]);
    let pos = p.add("pos_embed", &[cfg.num_tokens(), w]);
    let blocks = (0..cfg.depth)
        .map(|i| Block {
            ln1: add_norm(&mut p, &format!("blocks.{i}.norm1"), w),
            qkv: add_linear(&mut p, &format!("blocks.{i}.attn.qkv"), w, 3 * w),
            proj: add_linear(&mut p, &format!("blocks.{i}.attn.proj"), w, w),
            ln2: add_norm(&mut p, &format!("blocks.{i}.norm2"), w),
            fc1: add_linear(&mut p, &format!("blocks.{i}.mlp.fc1"), w, cfg.hidden()),
            fc2: add_linear(&mut p, &format!("blocks.{i}.mlp.fc2"), cfg.hidden(), w),
        })
        .collect();
    let norm = add_norm(&mut p, "norm", w);
    (p, Layout { patch, cls, pos, blocks, norm })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitEncoder {
    config: EncoderConfig,
    params: ParamStore,
    layout: LayoutHandle,
}

// Layout is derived from the config and never compared.
#[derive(Debug, Clone)]
struct LayoutHandle(Layout);

impl PartialEq for LayoutHandle {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Per-layer LayerNorm state needed by the backward pass.
#[derive(Debug, Clone)]
struct LnTrace {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    ln1: LnTrace,
    h1: Vec<f64>,
    qkv: Vec<f64>,
    attn: Vec<f64>,
    ctx: Vec<f64>,
    ln2: LnTrace,
    h2: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

/// Activations recorded by [`VitEncoder::forward_train`].
#[derive(Debug, Clone)]
pub struct VitTrace {
    batch: usize,
    patches: Vec<f64>,
    blocks: Vec<BlockTrace>,
    final_ln: LnTrace,
}

fn layer_norm(x: &[f64], width: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, LnTrace) {
    let rows = x.len() / width;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let rs = 1.0 / libm::sqrt(var + LN_EPS);
        rstd[r] = rs;
        for c in 0..width {
            let xh = (row[c] - mean) * rs;
            xhat[r * width + c] = xh;
            out[r * width + c] = xh * gamma[c] + beta[c];
        }
    }
    (out, LnTrace { xhat, rstd })
}

/// Accumulates dγ/dβ and adds dx into `dx`.
fn layer_norm_backward(
    dout: &[f64],
    trace: &LnTrace,
    width: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
    dx: &mut [f64],
) {
    let rows = dout.len() / width;
    let inv_w = 1.0 / width as f64;
    for r in 0..rows {
        let go = &dout[r * width..(r + 1) * width];
        let xh = &trace.xhat[r * width..(r + 1) * width];
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for c in 0..width {
            dgamma[c] += go[c] * xh[c];
            dbeta[c] += go[c];
            let g = go[c] * gamma[c];
            mean_g += g;
            mean_gx += g * xh[c];
        }
        mean_g *= inv_w;
        mean_gx *= inv_w;
        let rs = trace.rstd[r];
        let d = &mut dx[r * width..(r + 1) * width];
        for c in 0..width {
            d[c] += rs * (go[c] * gamma[c] - mean_g - xh[c] * mean_gx);
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) * (0.5 * core::f64::consts::FRAC_2_SQRT_PI * core::f64::consts::FRAC_1_SQRT_2);
    cdf + x * pdf
}

fn linear_forward(p: &ParamStore, l: &Linear, x: &[f64], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * l.fan_out];
    gemm_nn(rows, l.fan_in, l.fan_out, x, p.slice(&l.w), &mut out, 0.0);
    add_row_bias(&mut out, p.slice(&l.b));
    out
}

/// Accumulates weight/bias grads and returns dL/dx.
fn linear_backward(p: &ParamStore, l: &Linear, x: &[f64], dout: &[f64], rows: usize, grads: &mut [f64]) -> Vec<f64> {
    gemm_tn(l.fan_in, rows, l.fan_out, x, dout, &mut grads[l.w.clone()], 1.0);
    add_col_sums(rows, l.fan_out, dout, &mut grads[l.b.clone()]);
    let mut dx = vec![0.0; rows * l.fan_in];
    gemm_nt(rows, l.fan_out, l.fan_in, dout, p.slice(&l.w), &mut dx, 0.0);
    dx
}

impl VitEncoder {
    /// Fresh encoder: Xavier-uniform linear weights, zero biases, unit
    /// LayerNorm gains, truncated-normal(0.02) class and position embeddings.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (mut params, layout) = build_layout(&config);
        let mut rng = rng::derive_stream(seed, rng::streams::INIT_ENCODER);
        let linears = core::iter::once(&layout.patch)
            .chain(layout.blocks.iter().flat_map(|b| [&b.qkv, &b.proj, &b.fc1, &b.fc2]))
            .cloned()
            .collect::<Vec<_>>();
        for l in &linears {
            params.fill_xavier(&l.w, l.fan_in, l.fan_out, &mut rng);
        }
        params.fill_normal(&layout.cls, 0.02, &mut rng);
        params.fill_normal(&layout.pos, 0.02, &mut rng);
        let norms = layout.blocks.iter().flat_map(|b| [&b.ln1, &b.ln2]).chain([&layout.norm]).cloned().collect::<Vec<_>>();
        for n in &norms {
            params.fill(&n.g, 1.0);
        }
        Ok(Self { config, params, layout: LayoutHandle(layout) })
    }

    /// Builds an encoder from externally supplied tensors (e.g. converted
    /// pretrained weights). `lookup(name, shape)` must return exactly
    /// `shape.iter().product()` values for every tensor in the layout.
    pub fn from_named_tensors(
        config: EncoderConfig,
        mut lookup: impl FnMut(&str, &[usize]) -> Option<Vec<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let (mut params, layout) = build_layout(&config);
        let specs = params.specs().to_vec();
        for spec in specs {
            let values = lookup(&spec.name, &spec.shape)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor `{}`", spec.name)))?;
            if values.len() != spec.len {
                return Err(Error::ShapeMismatch(format!(
                    "tensor `{}` has {} values, expected {:?}",
                    spec.name,
                    values.len(),
                    spec.shape
                )));
            }
            params.data_mut()[spec.range()].copy_from_slice(&values);
        }
        Ok(Self { config, params, layout: LayoutHandle(layout) })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn layout(&self) -> &Layout {
        &self.layout.0
    }

    /// Resizes, rescales to `[-1, 1]` and cuts each image into patch rows:
    /// a `(batch * num_patches) x patch_dim` matrix, patches in raster order,
    /// each flattened as `(dy, dx, channel)`.
    pub fn patchify(&self, images: &[PatchImage]) -> Matrix {
        let cfg = &self.config;
        let (ps, side, pd) = (cfg.patch_size, cfg.patches_per_side(), cfg.patch_dim());
        let mut data = Vec::with_capacity(images.len() * cfg.num_patches() * pd);
        for img in images {
            let img = img.resize_bilinear(cfg.input_size, cfg.input_size);
            for py in 0..side {
                for px in 0..side {
                    for dy in 0..ps {
                        for dx in 0..ps {
                            for c in 0..CHANNELS {
                                data.push(img.get(px * ps + dx, py * ps + dy, c) as f64 * 2.0 - 1.0);
                            }
                        }
                    }
                }
            }
        }
        Matrix::new(images.len() * cfg.num_patches(), pd, data).expect("patch matrix shape")
    }

    /// Forward pass keeping the activations for [`VitEncoder::backward`].
    pub fn forward_train(&self, patches: &Matrix) -> Result<(Matrix, VitTrace)> {
        let cfg = self.config;
        let (np, pd, t, w) = (cfg.num_patches(), cfg.patch_dim(), cfg.num_tokens(), cfg.width);
        if patches.cols() != pd || patches.rows() % np != 0 {
            return Err(Error::ShapeMismatch(format!(
                "patch matrix {}x{} for {np} patches of dim {pd}",
                patches.rows(),
                patches.cols()
            )));
        }
        let batch = patches.rows() / np;
        let bt = batch * t;
        let p = &self.params;
        let lay = self.layout();

        let emb = linear_forward(p, &lay.patch, patches.as_slice(), batch * np);
        let cls = p.slice(&lay.cls);
        let pos = p.slice(&lay.pos);
        let mut x = vec![0.0; bt * w];
        for b in 0..batch {
            for tok in 0..t {
                let dst = &mut x[(b * t + tok) * w..(b * t + tok + 1) * w];
                let src = if tok == 0 { cls } else { &emb[(b * np + tok - 1) * w..(b * np + tok) * w] };
                for c in 0..w {
                    dst[c] = src[c] + pos[tok * w + c];
                }
            }
        }

        let mut traces = Vec::with_capacity(lay.blocks.len());
        for blk in &lay.blocks {
            assert_eq!(x.len(), bt * w, "token matrix shape at block boundary");
            let (h1, ln1) = layer_norm(&x, w, p.slice(&blk.ln1.g), p.slice(&blk.ln1.b));
            let qkv = linear_forward(p, &blk.qkv, &h1, bt);
            let (attn, ctx) = self.attention(&qkv, batch);
            let y = linear_forward(p, &blk.proj, &ctx, bt);
            x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);

            let (h2, ln2) = layer_norm(&x, w, p.slice(&blk.ln2.g), p.slice(&blk.ln2.b));
            let u = linear_forward(p, &blk.fc1, &h2, bt);
            let g: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
            let m = linear_forward(p, &blk.fc2, &g, bt);
            x.iter_mut().zip(&m).for_each(|(a, b)| *a += b);
            traces.push(BlockTrace { ln1, h1, qkv, attn, ctx, ln2, h2, u, g });
        }
        assert_eq!(x.len(), bt * w, "token matrix shape after final block");

        let mut cls_rows = Vec::with_capacity(batch * w);
        for b in 0..batch {
            cls_rows.extend_from_slice(&x[b * t * w..(b * t + 1) * w]);
        }
        let (r, final_ln) = layer_norm(&cls_rows, w, p.slice(&lay.norm.g), p.slice(&lay.norm.b));
        let trace = VitTrace { batch, patches: patches.as_slice().to_vec(), blocks: traces, final_ln };
        Ok((Matrix::new(batch, w, r)?, trace))
    }

    /// Softmax attention per image and head. Returns the probabilities
    /// (`batch * heads` blocks of `t x t`) and the concatenated context.
    fn attention(&self, qkv: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let (t, w, dh, heads) = (cfg.num_tokens(), cfg.width, cfg.head_dim(), cfg.heads);
        let scale = 1.0 / libm::sqrt(dh as f64);
        let rs = 3 * w as isize;
        let mut attn = vec![0.0; batch * heads * t * t];
        let mut ctx = vec![0.0; batch * t * w];
        for b in 0..batch {
            for h in 0..heads {
                let q0 = b * t * 3 * w + h * dh;
                let (k0, v0) = (q0 + w, q0 + 2 * w);
                let a = &mut attn[(b * heads + h) * t * t..(b * heads + h + 1) * t * t];
                gemm_strided(t, dh, t, &qkv[q0..], rs, 1, &qkv[k0..], 1, rs, a, t as isize, 1, 0.0);
                for row in a.chunks_exact_mut(t) {
                    let mut max = f64::NEG_INFINITY;
                    for v in row.iter_mut() {
                        *v *= scale;
                        max = max.max(*v);
                    }
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = libm::exp(*v - max);
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
                let c0 = b * t * w + h * dh;
                gemm_strided(t, t, dh, a, t as isize, 1, &qkv[v0..], rs, 1, &mut ctx[c0..], w as isize, 1, 0.0);
            }
        }
        (attn, ctx)
    }

    /// Gradient of `Σ dr ⊙ r` with respect to every parameter, in layout
    /// order.
    pub fn backward(&self, trace: &VitTrace, dr: &Matrix) -> Result<Vec<f64>> {
        let cfg = self.config;
        let (np, t, w, dh, heads) = (cfg.num_patches(), cfg.num_tokens(), cfg.width, cfg.head_dim(), cfg.heads);
        let batch = trace.batch;
        if dr.shape() != (batch, w) {
            return Err(Error::ShapeMismatch(format!("upstream gradient {:?}, expected ({batch}, {w})", dr.shape())));
        }
        let bt = batch * t;
        let p = &self.params;
        let lay = self.layout();
        let mut grads = p.zeros_like();

        let mut dcls = vec![0.0; batch * w];
        {
            let (dg, db) = split_pair(&mut grads, &lay.norm.g, &lay.norm.b);
            layer_norm_backward(dr.as_slice(), &trace.final_ln, w, p.slice(&lay.norm.g), dg, db, &mut dcls);
        }
        let mut dx = vec![0.0; bt * w];
        for b in 0..batch {
            dx[b * t * w..(b * t + 1) * w].copy_from_slice(&dcls[b * w..(b + 1) * w]);
        }

        let scale = 1.0 / libm::sqrt(dh as f64);
        let rs3 = 3 * w as isize;
        let mut da = vec![0.0; t * t];
        for (blk, tr) in lay.blocks.iter().zip(&trace.blocks).rev() {
            // MLP branch.
            let dgel = linear_backward(p, &blk.fc2, &tr.g, &dx, bt, &mut grads);
            let du: Vec<f64> = dgel.iter().zip(&tr.u).map(|(g, &u)| g * gelu_grad(u)).collect();
            let dh2 = linear_backward(p, &blk.fc1, &tr.h2, &du, bt, &mut grads);
            {
                let (dg, db) = split_pair(&mut grads, &blk.ln2.g, &blk.ln2.b);
                layer_norm_backward(&dh2, &tr.ln2, w, p.slice(&blk.ln2.g), dg, db, &mut dx);
            }

            // Attention branch.
            let dctx = linear_backward(p, &blk.proj, &tr.ctx, &dx, bt, &mut grads);
            let mut dqkv = vec![0.0; bt * 3 * w];
            for b in 0..batch {
                for h in 0..heads {
                    let q0 = b * t * 3 * w + h * dh;
                    let (k0, v0) = (q0 + w, q0 + 2 * w);
                    let c0 = b * t * w + h * dh;
                    let a = &tr.attn[(b * heads + h) * t * t..(b * heads + h + 1) * t * t];
                    // dA = dctx · Vᵀ
                    gemm_strided(t, dh, t, &dctx[c0..], w as isize, 1, &tr.qkv[v0..], 1, rs3, &mut da, t as isize, 1, 0.0);
                    // dV = Aᵀ · dctx
                    gemm_strided(t, t, dh, a, 1, t as isize, &dctx[c0..], w as isize, 1, &mut dqkv[v0..], rs3, 1, 0.0);
                    // softmax backward, folded with the score scale
                    for (drow, arow) in da.chunks_exact_mut(t).zip(a.chunks_exact(t)) {
                        let dot: f64 = drow.iter().zip(arow).map(|(x, y)| x * y).sum();
                        for (d, &p) in drow.iter_mut().zip(arow) {
                            *d = p * (*d - dot) * scale;
                        }
                    }
                    // dQ = dS · K ; dK = dSᵀ · Q
                    gemm_strided(t, t, dh, &da, t as isize, 1, &tr.qkv[k0..], rs3, 1, &mut dqkv[q0..], rs3, 1, 0.0);
                    gemm_strided(t, t, dh, &da, 1, t as isize, &tr.qkv[q0..], rs3, 1, &mut dqkv[k0..], rs3, 1, 0.0);
                }
            }
            let dh1 = linear_backward(p, &blk.qkv, &tr.h1, &dqkv, bt, &mut grads);
            {
                let (dg, db) = split_pair(&mut grads, &blk.ln1.g, &blk.ln1.b);
                layer_norm_backward(&dh1, &tr.ln1, w, p.slice(&blk.ln1.g), dg, db, &mut dx);
            }
        }

        // Embeddings.
        let mut demb = vec![0.0; batch * np * w];
        for b in 0..batch {
            for tok in 0..t {
                let src = &dx[(b * t + tok) * w..(b * t + tok + 1) * w];
                for c in 0..w {
                    grads[lay.pos.start + tok * w + c] += src[c];
                }
                if tok == 0 {
                    for c in 0..w {
                        grads[lay.cls.start + c] += src[c];
                    }
                } else {
                    demb[(b * np + tok - 1) * w..(b * np + tok) * w].copy_from_slice(src);
                }
            }
        }
        let pl = &lay.patch;
        gemm_tn(pl.fan_in, batch * np, pl.fan_out, &trace.patches, &demb, &mut grads[pl.w.clone()], 1.0);
        add_col_sums(batch * np, pl.fan_out, &demb, &mut grads[pl.b.clone()]);
        Ok(grads)
    }

    /// Representations for already-patchified input.
    pub fn forward(&self, patches: &Matrix) -> Result<Matrix> {
        self.forward_train(patches).map(|(r, _)| r)
    }
}

/// Two disjoint mutable ranges of one gradient vector (`a` before `b`).
fn split_pair<'a>(grads: &'a mut [f64], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = grads.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.end - b.start])
}

impl Encoder for VitEncoder {
    fn width(&self) -> usize {
        self.config.width
    }

    fn encode(&self, images: &[PatchImage]) -> Result<Matrix> {
        if images.is_empty() {
            return Ok(Matrix::zeros(0, self.config.width));
        }
        self.forward(&self.patchify(images))
    }
}

impl Parameterized for VitEncoder {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}
