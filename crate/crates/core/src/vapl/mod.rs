//! Visual attribute prompts.
//!
//! One learnable token per attribute is appended to the image tokens of a
//! frozen transformer. Its output, projected into the text space, is the
//! image's feature for that attribute, scored only against that attribute's
//! concepts. Prompts are trained with a per-attribute cross-entropy over
//! classes.

pub mod mask;
pub mod synthetic;
mod vit;

use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use mask::AttentionMask;
pub use vit::{gelu, Block, EncoderOutput, ImageContext, LayerNorm, Linear, PromptTrace, ToyViT, ToyViTConfig};

use crate::concept_space::ConceptSpace;
use crate::error::{AlbmError, Result};
use crate::io::{write_atomic, ByteReader, ByteWriter};
use crate::linalg::{argmax, l2_norm, log_sum_exp, softmax};
use crate::scoring::ActivationMatrix;

pub const PROMPT_INIT_STD: f64 = 0.02;
pub const PROMPT_CHECKPOINT_MAGIC: &[u8; 4] = b"VAPL";

/// `N_a x d_v` prompt vectors, one per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributePrompts {
    pub vectors: Array2<f64>,
    /// Set while another component trains; `train_prompts` refuses frozen
    /// prompts.
    pub frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct PromptTrailer {
    config: ToyViTConfig,
    seed: u64,
    frozen: bool,
}

impl AttributePrompts {
    /// Small seeded Gaussian init.
    pub fn init(num_attributes: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, PROMPT_INIT_STD).expect("finite std");
        Self {
            vectors: Array2::from_shape_simple_fn((num_attributes, embed_dim), || dist.sample(&mut rng)),
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn to_bytes(&self, config: &ToyViTConfig, seed: u64) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.magic(PROMPT_CHECKPOINT_MAGIC)
            .u32(self.vectors.nrows() as u32)
            .u32(self.vectors.ncols() as u32)
            .matrix(self.vectors.view());
        w.json_trailer(&PromptTrailer {
            config: *config,
            seed,
            frozen: self.frozen,
        })?;
        Ok(w.finish())
    }

    /// Prompts plus the backbone config and seed they were trained with.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, ToyViTConfig, u64)> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(PROMPT_CHECKPOINT_MAGIC)?;
        let n_a = r.u32()? as usize;
        let d_v = r.u32()? as usize;
        let vectors = r.matrix(n_a, d_v)?;
        let trailer: PromptTrailer = r.json_trailer()?;
        if trailer.config.embed_dim != d_v {
            return Err(AlbmError::Format(format!(
                "prompt width {d_v} disagrees with trailer embed_dim {}",
                trailer.config.embed_dim
            )));
        }
        Ok((
            Self {
                vectors,
                frozen: trailer.frozen,
            },
            trailer.config,
            trailer.seed,
        ))
    }

    pub fn save(&self, path: &Path, config: &ToyViTConfig, seed: u64) -> Result<()> {
        write_atomic(path, &self.to_bytes(config, seed)?)
    }

    pub fn load(path: &Path) -> Result<(Self, ToyViTConfig, u64)> {
        let bytes = std::fs::read(path).map_err(|e| AlbmError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `N_a x d` unit-norm per-attribute image features.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeFeatures {
    rows: Array2<f64>,
}

impl AttributeFeatures {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        for (j, r) in rows.axis_iter(Axis(0)).enumerate() {
            let n = l2_norm(r);
            if (n - 1.0).abs() > 1e-6 {
                return Err(AlbmError::Argument(format!("attribute feature {j} has norm {n}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaplOutput {
    pub cls_feature: Array1<f64>,
    pub attr_features: AttributeFeatures,
}

/// Encodes `image` with the prompts appended under the attribute mask.
pub fn forward(image: ArrayView3<f64>, vit: &ToyViT, prompts: &AttributePrompts) -> Result<VaplOutput> {
    let out = vit.encode(image, prompts.vectors.view())?;
    Ok(VaplOutput {
        cls_feature: out.cls_feature,
        attr_features: AttributeFeatures::new(out.prompt_features)?,
    })
}

/// `S[i][j] = <f_a^j, c_(i,j)>`: attribute `j`'s feature against attribute
/// `j`'s concept of every class.
pub fn attribute_scores(attr: &AttributeFeatures, space: &ConceptSpace) -> Result<ActivationMatrix> {
    scores_from_rows(attr.rows(), space)
}

fn scores_from_rows(rows: ArrayView2<f64>, space: &ConceptSpace) -> Result<ActivationMatrix> {
    if rows.nrows() != space.num_attributes() {
        return Err(AlbmError::dim("attribute features", space.num_attributes(), rows.nrows()));
    }
    if rows.ncols() != space.dim() {
        return Err(AlbmError::dim("attribute feature width", space.dim(), rows.ncols()));
    }
    let c = space.embeddings();
    let scores = Array2::from_shape_fn((space.num_classes(), space.num_attributes()), |(i, j)| {
        c.slice(ndarray::s![i, j, ..]).dot(&rows.row(j))
    });
    Ok(ActivationMatrix::new(scores))
}

/// Per-attribute cross-entropy over classes, averaged over attributes, and
/// its gradient with respect to `S`.
pub fn prompt_loss_grad(s: &ActivationMatrix, y: usize, tau: f64) -> Result<(f64, Array2<f64>)> {
    let (k, n_a) = s.scores.dim();
    if y >= k {
        return Err(AlbmError::Label { label: y, classes: k });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AlbmError::Argument(format!("temperature must be > 0, got {tau}")));
    }
    crate::linalg::ensure_finite(&s.scores, "activation matrix")?;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((k, n_a));
    for j in 0..n_a {
        let logits = s.scores.column(j).mapv(|x| x / tau);
        loss += log_sum_exp(logits.view()) - logits[y];
        let mut p = softmax(logits.view());
        p[y] -= 1.0;
        grad.column_mut(j).assign(&(p / (tau * n_a as f64)));
    }
    Ok((loss / n_a as f64, grad))
}

pub fn prompt_loss(s: &ActivationMatrix, y: usize, tau: f64) -> Result<f64> {
    Ok(prompt_loss_grad(s, y, tau)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Softmax temperature inside the alignment loss.
    pub temperature: f64,
}

impl Default for PromptTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0035,
            batch_size: 64,
            epochs: 5,
            seed: 0,
            temperature: 0.01,
        }
    }
}

impl PromptTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            problems.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AlbmError::Config(problems))
        }
    }
}

/// Mean alignment loss over `indices` and its gradient with respect to
/// every prompt vector, using cached image contexts.
pub fn prompt_loss_and_grad(
    vit: &ToyViT,
    prompts: ArrayView2<f64>,
    contexts: &[ImageContext],
    labels: &[usize],
    indices: &[usize],
    space: &ConceptSpace,
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    let n_a = prompts.nrows();
    if n_a != space.num_attributes() {
        return Err(AlbmError::dim("prompts", space.num_attributes(), n_a));
    }
    let mut grad = Array2::zeros(prompts.dim());
    let mut loss = 0.0;
    for &n in indices {
        let ctx = &contexts[n];
        let traces: Vec<PromptTrace> = prompts.axis_iter(Axis(0)).map(|p| vit.prompt_forward(ctx, p)).collect();
        let mut feats = Array2::zeros((n_a, space.dim()));
        for (mut row, t) in feats.axis_iter_mut(Axis(0)).zip(&traces) {
            row.assign(&t.feature);
        }
        let s = scores_from_rows(feats.view(), space)?;
        let (l, ds) = prompt_loss_grad(&s, labels[n], tau)?;
        loss += l;
        for (j, trace) in traces.iter().enumerate() {
            // dL/df_j = sum_i dS[i][j] c_(i,j)
            let mut df = Array1::zeros(space.dim());
            for i in 0..space.num_classes() {
                df.scaled_add(ds[[i, j]], &space.concept(i, j));
            }
            grad.row_mut(j).scaled_add(1.0, &vit.prompt_backward(ctx, trace, df.view()));
        }
    }
    let m = indices.len() as f64;
    Ok((loss / m, grad / m))
}

#[derive(Debug, Clone)]
pub struct PromptTrainOutcome {
    pub prompts: AttributePrompts,
    /// Full-data loss before training and after each epoch.
    pub loss_trace: Vec<f64>,
}

fn check_dataset(images: &[Array3<f64>], labels: &[usize], vit: &ToyViT, space: &ConceptSpace) -> Result<()> {
    if images.is_empty() {
        return Err(AlbmError::Empty("no training images".into()));
    }
    if images.len() != labels.len() {
        return Err(AlbmError::dim("labels", images.len(), labels.len()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= space.num_classes()) {
        return Err(AlbmError::Label {
            label: y,
            classes: space.num_classes(),
        });
    }
    if vit.config.text_dim != space.dim() {
        return Err(AlbmError::dim("text space width", space.dim(), vit.config.text_dim));
    }
    vit::check_images(images, &vit.config)
}

/// Trains only the prompt vectors with seeded mini-batch SGD; the backbone
/// is borrowed immutably and never changes.
pub fn train_prompts(
    images: &[Array3<f64>],
    labels: &[usize],
    vit: &ToyViT,
    space: &ConceptSpace,
    prompts: &AttributePrompts,
    cfg: &PromptTrainConfig,
) -> Result<PromptTrainOutcome> {
    cfg.validate()?;
    if prompts.frozen {
        return Err(AlbmError::Argument("prompts are frozen".into()));
    }
    if prompts.vectors.dim() != (space.num_attributes(), vit.config.embed_dim) {
        return Err(AlbmError::dim(
            "prompts",
            format!("{}x{}", space.num_attributes(), vit.config.embed_dim),
            format!("{}x{}", prompts.vectors.nrows(), prompts.vectors.ncols()),
        ));
    }
    check_dataset(images, labels, vit, space)?;
    let contexts = images
        .iter()
        .map(|img| vit.context(img.view()))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..images.len()).collect();
    let tau = cfg.temperature;

    let mut p = prompts.vectors.clone();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let initial = prompt_loss_and_grad(vit, p.view(), &contexts, labels, &all, space, tau)?.0;
    if !initial.is_finite() {
        return Err(AlbmError::Divergence { epoch: 0 });
    }
    trace.push(initial);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = all.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, g) = prompt_loss_and_grad(vit, p.view(), &contexts, labels, batch, space, tau)?;
            p.scaled_add(-cfg.lr, &g);
        }
        let loss = prompt_loss_and_grad(vit, p.view(), &contexts, labels, &all, space, tau)?.0;
        if !loss.is_finite() || p.iter().any(|x| !x.is_finite()) {
            return Err(AlbmError::Divergence { epoch });
        }
        trace.push(loss);
    }
    Ok(PromptTrainOutcome {
        prompts: AttributePrompts {
            vectors: p,
            frozen: false,
        },
        loss_trace: trace,
    })
}

/// Fraction of samples whose per-attribute score argmax over classes equals
/// the label, for each attribute.
pub fn attribute_accuracy(
    images: &[Array3<f64>],
    labels: &[usize],
    vit: &ToyViT,
    space: &ConceptSpace,
    prompts: &AttributePrompts,
) -> Result<Vec<f64>> {
    check_dataset(images, labels, vit, space)?;
    let n_a = space.num_attributes();
    let mut hits = vec![0usize; n_a];
    for (img, &y) in images.iter().zip(labels) {
        let out = forward(img.view(), vit, prompts)?;
        let s = attribute_scores(&out.attr_features, space)?;
        for (j, h) in hits.iter_mut().enumerate() {
            if argmax(s.scores.column(j)) == y {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / images.len() as f64).collect())
}

#[cfg(test)]
mod tests;
