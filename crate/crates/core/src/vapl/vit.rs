//! A small pre-norm vision transformer with frozen random weights.
//!
//! Tokens are `[CLS, patches..., prompts...]`. Positional embeddings cover
//! CLS and patches only. The backward pass is written for prompt rows alone:
//! under [`AttentionMask`] nothing attends to a prompt, so the CLS and image
//! streams are constants with respect to the prompts and a prompt's gradient
//! flows only through its own row.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mask::AttentionMask;
use crate::error::{AlbmError, Result};
use crate::linalg::{l2_norm, softmax};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Width of the shared image-text space.
    pub text_dim: usize,
    pub seed: u64,
}

impl Default for ToyViTConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            channels: 3,
            embed_dim: 64,
            layers: 2,
            heads: 4,
            mlp_ratio: 4,
            text_dim: 32,
            seed: 0,
        }
    }
}

impl ToyViTConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            problems.push(format!(
                "image size {} must be a positive multiple of patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            problems.push(format!(
                "embed dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.channels == 0 || self.layers == 0 || self.mlp_ratio == 0 || self.text_dim == 0 {
            problems.push("channels, layers, mlp_ratio and text_dim must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AlbmError::Config(problems))
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`; rows are multiplied from the left.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn random(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, bias_std: f64) -> Self {
        let w = normal(rng, (fan_in, fan_out), 1.0 / (fan_in as f64).sqrt());
        let b = normal(rng, fan_out, bias_std);
        Self { w, b }
    }

    pub fn row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.dot(&self.w) + &self.b
    }

    pub fn rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Gradient with respect to the input row.
    fn back(&self, dy: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Array1<f64>,
    inv_std: f64,
}

impl LayerNorm {
    fn random(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        Self {
            gamma: normal(rng, dim, 0.1) + 1.0,
            beta: normal(rng, dim, 0.1),
        }
    }

    fn forward_cached(&self, x: ArrayView1<f64>) -> (Array1<f64>, LnCache) {
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let centered = x.mapv(|v| v - mean);
        let var = centered.dot(&centered) / n;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let xhat = centered * inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        (y, LnCache { xhat, inv_std })
    }

    pub fn row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.forward_cached(x).0
    }

    pub fn rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        for (mut o, r) in out.axis_iter_mut(Axis(0)).zip(x.axis_iter(Axis(0))) {
            o.assign(&self.row(r));
        }
        out
    }

    fn back(&self, dy: ArrayView1<f64>, cache: &LnCache) -> Array1<f64> {
        let n = dy.len() as f64;
        let dxhat = &dy * &self.gamma;
        let mean_d = dxhat.sum() / n;
        let mean_dx = dxhat.dot(&cache.xhat) / n;
        (dxhat - mean_d - &cache.xhat * mean_dx) * cache.inv_std
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + 0.044715 * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
}

fn normal<D: ndarray::ShapeBuilder<Dim = Sh>, Sh: ndarray::Dimension>(
    rng: &mut ChaCha8Rng,
    shape: D,
    std: f64,
) -> ndarray::Array<f64, Sh> {
    let dist = Normal::new(0.0, std).expect("finite std");
    ndarray::Array::from_shape_simple_fn(shape, || dist.sample(rng))
}

/// Frozen backbone: patch embedding, CLS token, positional table, blocks,
/// final norm and the projection into the text space.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyViT {
    pub config: ToyViTConfig,
    pub patch: Linear,
    pub cls: Array1<f64>,
    /// `(1 + T) x d_v`, CLS first.
    pub pos: Array2<f64>,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNorm,
    /// `d_v x d`.
    pub proj: Array2<f64>,
}

/// Final hidden states and unit features of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Last-layer token states before the final norm, `[CLS, patches, prompts]`.
    pub tokens: Array2<f64>,
    pub cls_feature: Array1<f64>,
    /// `n_prompts x d`, unit rows.
    pub prompt_features: Array2<f64>,
}

/// Per-layer keys and values of the CLS and image tokens for one image.
/// Prompt rows attend to exactly these.
#[derive(Debug, Clone)]
pub struct ImageContext {
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
    pub cls_feature: Array1<f64>,
}

struct RowLayer {
    ln1: LnCache,
    probs: Vec<Array1<f64>>,
    ln2: LnCache,
    z: Array1<f64>,
}

/// Everything the backward pass needs from one prompt row's forward pass.
pub struct PromptTrace {
    layers: Vec<RowLayer>,
    ln_f: LnCache,
    raw_norm: f64,
    pub feature: Array1<f64>,
}

impl ToyViT {
    /// Seeded random backbone.
    pub fn new(config: ToyViTConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.embed_dim;
        let hidden = d * config.mlp_ratio;
        let patch = Linear::random(&mut rng, config.patch_dim(), d, 0.02);
        let cls = normal(&mut rng, d, 1.0);
        let pos = normal(&mut rng, (1 + config.num_patches(), d), 1.0);
        let blocks = (0..config.layers)
            .map(|_| Block {
                ln1: LayerNorm::random(&mut rng, d),
                q: Linear::random(&mut rng, d, d, 0.02),
                k: Linear::random(&mut rng, d, d, 0.02),
                v: Linear::random(&mut rng, d, d, 0.02),
                o: Linear::random(&mut rng, d, d, 0.02),
                ln2: LayerNorm::random(&mut rng, d),
                fc1: Linear::random(&mut rng, d, hidden, 0.02),
                fc2: Linear::random(&mut rng, hidden, d, 0.02),
            })
            .collect();
        let ln_f = LayerNorm::random(&mut rng, d);
        let proj = normal(&mut rng, (d, config.text_dim), 1.0 / (d as f64).sqrt());
        Ok(Self {
            config,
            patch,
            cls,
            pos,
            blocks,
            ln_f,
            proj,
        })
    }

    /// SHA-256 over every backbone parameter, for freeze checks.
    pub fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        let mut put = |a: &mut dyn Iterator<Item = &f64>| {
            for x in a {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(&mut self.patch.w.iter());
        put(&mut self.patch.b.iter());
        put(&mut self.cls.iter());
        put(&mut self.pos.iter());
        for b in &self.blocks {
            for ln in [&b.ln1, &b.ln2] {
                put(&mut ln.gamma.iter());
                put(&mut ln.beta.iter());
            }
            for l in [&b.q, &b.k, &b.v, &b.o, &b.fc1, &b.fc2] {
                put(&mut l.w.iter());
                put(&mut l.b.iter());
            }
        }
        put(&mut self.ln_f.gamma.iter());
        put(&mut self.ln_f.beta.iter());
        put(&mut self.proj.iter());
        crate::io::sha256_hex(&bytes)
    }

    /// Flattens a `C x H x W` image into `T x patch_dim`, patches row-major,
    /// each patch laid out channel, row, column.
    pub fn patchify(&self, image: ArrayView3<f64>) -> Result<Array2<f64>> {
        let c = &self.config;
        let expected = (c.channels, c.image_size, c.image_size);
        if image.dim() != expected {
            return Err(AlbmError::dim("image", format!("{expected:?}"), format!("{:?}", image.dim())));
        }
        let p = c.patch_size;
        let mut out = Array2::zeros((c.num_patches(), c.patch_dim()));
        for gy in 0..c.grid() {
            for gx in 0..c.grid() {
                let patch = image.slice(s![.., gy * p..(gy + 1) * p, gx * p..(gx + 1) * p]);
                let flat = Array1::from_iter(patch.iter().copied());
                out.row_mut(gy * c.grid() + gx).assign(&flat);
            }
        }
        Ok(out)
    }

    /// CLS and patch tokens with positional embeddings: `(1 + T) x d_v`.
    pub fn embed(&self, image: ArrayView3<f64>) -> Result<Array2<f64>> {
        let patches = self.patchify(image)?;
        let mut tokens = Array2::zeros((1 + patches.nrows(), self.config.embed_dim));
        tokens.row_mut(0).assign(&self.cls);
        tokens.slice_mut(s![1.., ..]).assign(&self.patch.rows(patches.view()));
        tokens += &self.pos;
        Ok(tokens)
    }

    fn attend_rows(&self, block: &Block, x: &Array2<f64>, mask: &AttentionMask) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h = block.ln1.rows(x.view());
        let q = block.q.rows(h.view());
        let k = block.k.rows(h.view());
        let v = block.v.rows(h.view());
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros(x.dim());
        for i in 0..x.nrows() {
            let cols = mask.allowed_keys(i);
            for head in 0..self.config.heads {
                let hs = head * dh..(head + 1) * dh;
                let qi = q.slice(s![i, hs.clone()]);
                let scores = Array1::from_iter(cols.iter().map(|&j| qi.dot(&k.slice(s![j, hs.clone()])) * scale));
                let probs = softmax(scores.view());
                let mut acc = out.slice_mut(s![i, hs.clone()]);
                for (&j, &a) in cols.iter().zip(&probs) {
                    acc.scaled_add(a, &v.slice(s![j, hs.clone()]));
                }
            }
        }
        (block.o.rows(out.view()), k, v)
    }

    fn mlp_rows(block: &Block, x: &Array2<f64>) -> Array2<f64> {
        let h = block.ln2.rows(x.view());
        let z = block.fc1.rows(h.view()).mapv(gelu);
        block.fc2.rows(z.view())
    }

    /// Runs every block on a full token matrix under `mask`. Returns final
    /// states and each layer's keys and values.
    fn run(&self, mut x: Array2<f64>, mask: &AttentionMask) -> (Array2<f64>, Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut keys = Vec::with_capacity(self.blocks.len());
        let mut values = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (att, k, v) = self.attend_rows(block, &x, mask);
            x += &att;
            let m = Self::mlp_rows(block, &x);
            x += &m;
            keys.push(k);
            values.push(v);
        }
        (x, keys, values)
    }

    /// Unit feature in the text space for one final hidden state.
    pub fn feature(&self, hidden: ArrayView1<f64>) -> Array1<f64> {
        let r = self.ln_f.row(hidden).dot(&self.proj);
        let n = l2_norm(r.view());
        r / n
    }

    /// Full forward pass over `[CLS, patches, prompts]` with the attribute
    /// prompt mask.
    pub fn encode(&self, image: ArrayView3<f64>, prompts: ArrayView2<f64>) -> Result<EncoderOutput> {
        if prompts.ncols() != self.config.embed_dim {
            return Err(AlbmError::dim("prompt width", self.config.embed_dim, prompts.ncols()));
        }
        let ctx = self.embed(image)?;
        let n_ctx = ctx.nrows();
        let mut x = Array2::zeros((n_ctx + prompts.nrows(), self.config.embed_dim));
        x.slice_mut(s![..n_ctx, ..]).assign(&ctx);
        x.slice_mut(s![n_ctx.., ..]).assign(&prompts);
        let mask = AttentionMask::new(n_ctx, prompts.nrows());
        let (tokens, _, _) = self.run(x, &mask);
        let cls_feature = self.feature(tokens.row(0));
        let mut prompt_features = Array2::zeros((prompts.nrows(), self.config.text_dim));
        for (j, mut row) in prompt_features.axis_iter_mut(Axis(0)).enumerate() {
            row.assign(&self.feature(tokens.row(n_ctx + j)));
        }
        Ok(EncoderOutput {
            tokens,
            cls_feature,
            prompt_features,
        })
    }

    /// Runs the CLS and image stream once and keeps what prompt rows need.
    pub fn context(&self, image: ArrayView3<f64>) -> Result<ImageContext> {
        let ctx = self.embed(image)?;
        let mask = AttentionMask::new(ctx.nrows(), 0);
        let (tokens, keys, values) = self.run(ctx, &mask);
        Ok(ImageContext {
            keys,
            values,
            cls_feature: self.feature(tokens.row(0)),
        })
    }

    /// Forward pass of a single prompt row against a cached image context.
    pub fn prompt_forward(&self, ctx: &ImageContext, prompt: ArrayView1<f64>) -> PromptTrace {
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = prompt.to_owned();
        let mut layers = Vec::with_capacity(self.blocks.len());
        for (l, block) in self.blocks.iter().enumerate() {
            let (u, ln1) = block.ln1.forward_cached(x.view());
            let q = block.q.row(u.view());
            let keys = &ctx.keys[l];
            let values = &ctx.values[l];
            let mut o = Array1::zeros(self.config.embed_dim);
            let mut probs = Vec::with_capacity(self.config.heads);
            for head in 0..self.config.heads {
                let hs = head * dh..(head + 1) * dh;
                let scores = keys.slice(s![.., hs.clone()]).dot(&q.slice(s![hs.clone()])) * scale;
                let p = softmax(scores.view());
                o.slice_mut(s![hs.clone()]).assign(&values.slice(s![.., hs.clone()]).t().dot(&p));
                probs.push(p);
            }
            let x1 = &x + &block.o.row(o.view());
            let (v, ln2) = block.ln2.forward_cached(x1.view());
            let z = block.fc1.row(v.view());
            let m = block.fc2.row(z.mapv(gelu).view());
            let x2 = &x1 + &m;
            layers.push(RowLayer {
                ln1,
                probs,
                ln2,
                z,
            });
            x = x2;
        }
        let (y, ln_f) = self.ln_f.forward_cached(x.view());
        let r = y.dot(&self.proj);
        let raw_norm = l2_norm(r.view());
        PromptTrace {
            layers,
            ln_f,
            raw_norm,
            feature: r / raw_norm,
        }
    }

    /// Gradient of a scalar loss with respect to the prompt vector, given the
    /// loss gradient with respect to the prompt's unit feature.
    pub fn prompt_backward(&self, ctx: &ImageContext, trace: &PromptTrace, dfeature: ArrayView1<f64>) -> Array1<f64> {
        let f = &trace.feature;
        let dr = (&dfeature - &(f * f.dot(&dfeature))) / trace.raw_norm;
        let dy = self.proj.dot(&dr);
        let mut dx = self.ln_f.back(dy.view(), &trace.ln_f);

        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let cache = &trace.layers[l];
            // x2 = x1 + fc2(gelu(fc1(ln2(x1))))
            let dg = block.fc2.back(dx.view());
            let dz = &dg * &cache.z.mapv(gelu_grad);
            let dv = block.fc1.back(dz.view());
            let dx1 = &dx + &block.ln2.back(dv.view(), &cache.ln2);
            // x1 = x + o(attention(q(ln1(x))))
            let d_o = block.o.back(dx1.view());
            let mut dq = Array1::zeros(self.config.embed_dim);
            for head in 0..self.config.heads {
                let hs = head * dh..(head + 1) * dh;
                let p = &cache.probs[head];
                let da = ctx.values[l].slice(s![.., hs.clone()]).dot(&d_o.slice(s![hs.clone()]));
                let ds = p * &(&da - p.dot(&da));
                dq.slice_mut(s![hs.clone()])
                    .assign(&(ctx.keys[l].slice(s![.., hs.clone()]).t().dot(&ds) * scale));
            }
            let du = block.q.back(dq.view());
            dx = &dx1 + &block.ln1.back(du.view(), &cache.ln1);
        }
        dx
    }
}

/// Stacks images into the `C x H x W` views the encoder expects.
pub fn check_images(images: &[Array3<f64>], cfg: &ToyViTConfig) -> Result<()> {
    let expected = (cfg.channels, cfg.image_size, cfg.image_size);
    for (n, img) in images.iter().enumerate() {
        if img.dim() != expected {
            return Err(AlbmError::dim(
                format!("image {n}"),
                format!("{expected:?}"),
                format!("{:?}", img.dim()),
            ));
        }
    }
    Ok(())
}
