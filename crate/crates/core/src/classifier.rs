//! Concept classifiers: class-local training, novel-class synthesis from
//! class-name similarity, the class-shared baseline, NEC pruning and
//! evaluation.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept_space::ConceptSpace;
use crate::error::{AlbmError, Result};
use crate::io::{write_atomic, ByteReader, ByteWriter};
use crate::linalg::{argmax, l2_norm, log_sum_exp, softmax};
use crate::scoring::{self, ActivationMatrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ALBM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// Starts at zero-shot mean scoring.
    #[default]
    Ones,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub temperature: f64,
    pub momentum: f64,
    pub init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0006,
            batch_size: 64,
            epochs: 1000,
            seed: 0,
            temperature: 1.0,
            momentum: 0.0,
            init: WeightInit::Ones,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            problems.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AlbmError::Config(problems))
        }
    }
}

/// Training set of activation matrices with their labels.
#[derive(Debug, Clone)]
pub struct LabeledActivations {
    items: Vec<ActivationMatrix>,
    labels: Vec<usize>,
}

impl LabeledActivations {
    pub fn new(items: Vec<ActivationMatrix>, labels: Vec<usize>) -> Result<Self> {
        if items.len() != labels.len() {
            return Err(AlbmError::dim("labels", items.len(), labels.len()));
        }
        let first = items
            .first()
            .ok_or_else(|| AlbmError::Empty("no training samples".into()))?;
        let shape = first.scores.dim();
        for (n, s) in items.iter().enumerate() {
            if s.scores.dim() != shape {
                return Err(AlbmError::dim(
                    format!("activation matrix {n}"),
                    format!("{shape:?}"),
                    format!("{:?}", s.scores.dim()),
                ));
            }
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= shape.0) {
            return Err(AlbmError::Label {
                label: y,
                classes: shape.0,
            });
        }
        Ok(Self { items, labels })
    }

    /// Activations of every feature row against `space`.
    pub fn from_features(features: ArrayView2<f64>, labels: &[usize], space: &ConceptSpace) -> Result<Self> {
        Self::new(scoring::activations_batch(features, space)?, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.items[0].num_classes()
    }

    pub fn num_attributes(&self) -> usize {
        self.items[0].num_attributes()
    }

    pub fn items(&self) -> &[ActivationMatrix] {
        &self.items
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// `K x N_a` class-local weights.
    Albm,
    /// `K x (K * N_a)` weights over the class-shared concept list.
    LbmShared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptClassifier {
    pub weights: Array2<f64>,
    pub classes: Vec<String>,
    pub kind: ClassifierKind,
    pub config: TrainConfig,
    pub epochs_trained: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointTrailer {
    kind: ClassifierKind,
    classes: Vec<String>,
    config: TrainConfig,
    epochs_trained: usize,
    seed: u64,
}

impl ConceptClassifier {
    pub fn new(weights: Array2<f64>, classes: Vec<String>, kind: ClassifierKind, config: TrainConfig) -> Result<Self> {
        if classes.len() != weights.nrows() {
            return Err(AlbmError::dim("classifier classes", weights.nrows(), classes.len()));
        }
        crate::linalg::ensure_finite(&weights, "classifier weights")?;
        Ok(Self {
            weights,
            classes,
            kind,
            config,
            epochs_trained: 0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_attributes(&self) -> usize {
        self.weights.ncols()
    }

    /// Per-class count of nonzero weights.
    pub fn effective_concepts(&self) -> Vec<usize> {
        self.weights
            .axis_iter(Axis(0))
            .map(|r| r.iter().filter(|&&w| w != 0.0).count())
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.magic(CHECKPOINT_MAGIC)
            .u32(CHECKPOINT_VERSION)
            .u32(self.num_classes() as u32)
            .u32(self.num_attributes() as u32)
            .matrix(self.weights.view());
        w.json_trailer(&CheckpointTrailer {
            kind: self.kind,
            classes: self.classes.clone(),
            config: self.config,
            epochs_trained: self.epochs_trained,
            seed: self.config.seed,
        })?;
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(AlbmError::Format(format!("unsupported checkpoint version {version}")));
        }
        let k = r.u32()? as usize;
        let n_a = r.u32()? as usize;
        let weights = r.matrix(k, n_a)?;
        let trailer: CheckpointTrailer = r.json_trailer()?;
        let mut clf = Self::new(weights, trailer.classes, trailer.kind, trailer.config)?;
        clf.epochs_trained = trailer.epochs_trained;
        Ok(clf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AlbmError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Classifier plus the full-data loss before training and after each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: ConceptClassifier,
    pub loss_trace: Vec<f64>,
}

/// Mean cross-entropy of the class-local classifier over `indices` and its
/// gradient with respect to the weights.
fn albm_loss_grad_on(
    weights: ArrayView2<f64>,
    data: &LabeledActivations,
    indices: &[usize],
    tau: f64,
) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(weights.dim());
    let mut loss = 0.0;
    for &n in indices {
        let s = &data.items[n].scores;
        let y = data.labels[n];
        let logits = (s * &weights).sum_axis(Axis(1)) / tau;
        loss += log_sum_exp(logits.view()) - logits[y];
        let mut p = softmax(logits.view());
        p[y] -= 1.0;
        // d logit_i / d w_i = s_i / tau; other rows contribute nothing.
        for (i, mut g) in grad.axis_iter_mut(Axis(0)).enumerate() {
            g.scaled_add(p[i] / tau, &s.row(i));
        }
    }
    let m = indices.len() as f64;
    (loss / m, grad / m)
}

pub fn albm_loss_and_grad(weights: ArrayView2<f64>, data: &LabeledActivations, tau: f64) -> Result<(f64, Array2<f64>)> {
    check_weights(weights, data.num_classes(), data.num_attributes())?;
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(albm_loss_grad_on(weights, data, &all, tau))
}

pub fn albm_loss(weights: ArrayView2<f64>, data: &LabeledActivations, tau: f64) -> Result<f64> {
    Ok(albm_loss_and_grad(weights, data, tau)?.0)
}

fn check_weights(weights: ArrayView2<f64>, k: usize, n: usize) -> Result<()> {
    if weights.dim() != (k, n) {
        return Err(AlbmError::dim(
            "classifier weights",
            format!("{k}x{n}"),
            format!("{}x{}", weights.nrows(), weights.ncols()),
        ));
    }
    Ok(())
}

fn initial_weights(init: WeightInit, shape: (usize, usize)) -> Array2<f64> {
    match init {
        WeightInit::Ones => Array2::ones(shape),
        WeightInit::Zeros => Array2::zeros(shape),
    }
}

/// Seeded mini-batch SGD over an arbitrary loss; `mask` pins entries at zero.
fn sgd<F>(
    mut weights: Array2<f64>,
    n_samples: usize,
    cfg: &TrainConfig,
    mask: Option<&Array2<f64>>,
    loss_grad: F,
) -> Result<(Array2<f64>, Vec<f64>)>
where
    F: Fn(ArrayView2<f64>, &[usize]) -> (f64, Array2<f64>),
{
    let all: Vec<usize> = (0..n_samples).collect();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let initial = loss_grad(weights.view(), &all).0;
    if !initial.is_finite() {
        return Err(AlbmError::Divergence { epoch: 0 });
    }
    trace.push(initial);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = all.clone();
    let mut velocity = Array2::<f64>::zeros(weights.dim());
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, mut grad) = loss_grad(weights.view(), batch);
            if let Some(m) = mask {
                grad *= m;
            }
            if cfg.momentum > 0.0 {
                velocity = velocity * cfg.momentum + &grad;
                weights.scaled_add(-cfg.lr, &velocity);
            } else {
                weights.scaled_add(-cfg.lr, &grad);
            }
        }
        let loss = loss_grad(weights.view(), &all).0;
        if !loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(AlbmError::Divergence { epoch });
        }
        trace.push(loss);
    }
    Ok((weights, trace))
}

/// Trains the class-local concept classifier with mini-batch SGD on the
/// mean cross-entropy of the class-local softmax.
pub fn train_walpha(data: &LabeledActivations, classes: &[String], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let shape = (data.num_classes(), data.num_attributes());
    if classes.len() != shape.0 {
        return Err(AlbmError::dim("class names", shape.0, classes.len()));
    }
    let tau = cfg.temperature;
    let (weights, trace) = sgd(initial_weights(cfg.init, shape), data.len(), cfg, None, |w, idx| {
        albm_loss_grad_on(w, data, idx, tau)
    })?;
    let mut classifier = ConceptClassifier::new(weights, classes.to_vec(), ClassifierKind::Albm, *cfg)?;
    classifier.epochs_trained = cfg.epochs;
    Ok(TrainOutcome {
        classifier,
        loss_trace: trace,
    })
}

/// Class-shared concept scores for every feature row: `n x N`.
pub fn shared_scores(features: ArrayView2<f64>, flat_concepts: ArrayView2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != flat_concepts.ncols() {
        return Err(AlbmError::dim("image features", flat_concepts.ncols(), features.ncols()));
    }
    let mut unit = features.to_owned();
    for mut row in unit.axis_iter_mut(Axis(0)) {
        let f = scoring::unit_feature(row.view())?;
        row.assign(&f);
    }
    Ok(unit.dot(&flat_concepts.t()))
}

fn shared_loss_grad_on(
    weights: ArrayView2<f64>,
    scores: ArrayView2<f64>,
    labels: &[usize],
    indices: &[usize],
    tau: f64,
) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(weights.dim());
    let mut loss = 0.0;
    for &n in indices {
        let a = scores.row(n);
        let y = labels[n];
        let logits = weights.dot(&a) / tau;
        loss += log_sum_exp(logits.view()) - logits[y];
        let mut p = softmax(logits.view());
        p[y] -= 1.0;
        for (i, mut g) in grad.axis_iter_mut(Axis(0)).enumerate() {
            g.scaled_add(p[i] / tau, &a);
        }
    }
    let m = indices.len() as f64;
    (loss / m, grad / m)
}

/// Mean cross-entropy of the class-shared classifier on precomputed
/// concept scores, with gradient.
pub fn lbm_shared_loss_and_grad(
    weights: ArrayView2<f64>,
    scores: ArrayView2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    if scores.nrows() != labels.len() {
        return Err(AlbmError::dim("labels", scores.nrows(), labels.len()));
    }
    if weights.ncols() != scores.ncols() {
        return Err(AlbmError::dim("shared classifier columns", scores.ncols(), weights.ncols()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= weights.nrows()) {
        return Err(AlbmError::Label {
            label: y,
            classes: weights.nrows(),
        });
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    Ok(shared_loss_grad_on(weights, scores, labels, &all, tau))
}

/// Trains the class-shared baseline over all concepts of all classes.
pub fn train_wp_shared(
    features: ArrayView2<f64>,
    labels: &[usize],
    flat_concepts: ArrayView2<f64>,
    classes: &[String],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(AlbmError::Empty("no training samples".into()));
    }
    let scores = shared_scores(features, flat_concepts)?;
    let shape = (classes.len(), flat_concepts.nrows());
    // Validates labels and shapes once up front.
    lbm_shared_loss_and_grad(Array2::zeros(shape).view(), scores.view(), labels, cfg.temperature)?;
    let tau = cfg.temperature;
    let (weights, trace) = sgd(initial_weights(cfg.init, shape), labels.len(), cfg, None, |w, idx| {
        shared_loss_grad_on(w, scores.view(), labels, idx, tau)
    })?;
    let mut classifier = ConceptClassifier::new(weights, classes.to_vec(), ClassifierKind::LbmShared, *cfg)?;
    classifier.epochs_trained = cfg.epochs;
    Ok(TrainOutcome {
        classifier,
        loss_trace: trace,
    })
}

/// `M x K` mixing coefficients: row `j` is the softmax over base classes of
/// `<n_i, n_novel_j> / tau`.
pub fn transfer_coefficients(base_names: ArrayView2<f64>, novel_names: ArrayView2<f64>, tau: f64) -> Result<Array2<f64>> {
    if base_names.ncols() != novel_names.ncols() {
        return Err(AlbmError::dim("novel name embeddings", base_names.ncols(), novel_names.ncols()));
    }
    if base_names.nrows() == 0 {
        return Err(AlbmError::Empty("no base classes".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AlbmError::Argument(format!("temperature must be > 0, got {tau}")));
    }
    for (which, m) in [("base", base_names), ("novel", novel_names)] {
        for (i, row) in m.axis_iter(Axis(0)).enumerate() {
            let n = l2_norm(row);
            if (n - 1.0).abs() > scoring::UNIT_NORM_TOLERANCE {
                return Err(AlbmError::Argument(format!(
                    "{which} name embedding {i} has norm {n}, expected unit"
                )));
            }
        }
    }
    let sims = novel_names.dot(&base_names.t()) / tau;
    let mut coeffs = Array2::zeros(sims.dim());
    for (mut out, row) in coeffs.axis_iter_mut(Axis(0)).zip(sims.axis_iter(Axis(0))) {
        out.assign(&softmax(row));
    }
    Ok(coeffs)
}

/// Synthesizes classifier rows for unseen classes as convex combinations of
/// the base rows, weighted by class-name similarity.
pub fn transfer_to_novel(
    base: &ConceptClassifier,
    base_names: ArrayView2<f64>,
    novel_names: ArrayView2<f64>,
    tau: f64,
) -> Result<Array2<f64>> {
    if base_names.nrows() != base.num_classes() {
        return Err(AlbmError::dim("base name embeddings", base.num_classes(), base_names.nrows()));
    }
    let coeffs = transfer_coefficients(base_names, novel_names, tau)?;
    Ok(coeffs.dot(&base.weights))
}

/// Keeps the `nec` largest-magnitude weights in every class row and zeroes
/// the rest. Magnitude ties keep the lower attribute index.
pub fn prune_to_nec(clf: &ConceptClassifier, nec: usize) -> Result<ConceptClassifier> {
    let n_a = clf.num_attributes();
    if nec == 0 || nec > n_a {
        return Err(AlbmError::Argument(format!("NEC must be in 1..={n_a}, got {nec}")));
    }
    let mut pruned = clf.clone();
    for mut row in pruned.weights.axis_iter_mut(Axis(0)) {
        let keep = top_magnitude(row.view(), nec);
        for (j, w) in row.iter_mut().enumerate() {
            if !keep[j] {
                *w = 0.0;
            }
        }
    }
    Ok(pruned)
}

fn top_magnitude(row: ArrayView1<f64>, nec: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
    let mut keep = vec![false; row.len()];
    for &j in &order[..nec] {
        keep[j] = true;
    }
    keep
}

/// Retrains the surviving weights of a pruned classifier; pruned entries
/// stay at zero.
pub fn refit_pruned(clf: &ConceptClassifier, data: &LabeledActivations, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_weights(clf.weights.view(), data.num_classes(), data.num_attributes())?;
    let mask = clf.weights.mapv(|w| if w != 0.0 { 1.0 } else { 0.0 });
    let tau = cfg.temperature;
    let (weights, trace) = sgd(clf.weights.clone(), data.len(), cfg, Some(&mask), |w, idx| {
        albm_loss_grad_on(w, data, idx, tau)
    })?;
    let mut classifier = ConceptClassifier::new(weights, clf.classes.clone(), clf.kind, *cfg)?;
    classifier.epochs_trained = clf.epochs_trained + cfg.epochs;
    Ok(TrainOutcome {
        classifier,
        loss_trace: trace,
    })
}

/// A prediction rule to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    ZeroShotClip { tau: f64 },
    ZeroShotAlbm { tau: f64 },
    Albm { weights: ArrayView2<'a, f64>, tau: f64 },
    LbmShared { weights: ArrayView2<'a, f64>, tau: f64 },
}

impl Model<'_> {
    pub fn probabilities(&self, f: ArrayView1<f64>, space: &ConceptSpace, flat: Option<&Array2<f64>>) -> Result<Array1<f64>> {
        match *self {
            Model::ZeroShotClip { tau } => scoring::predict_zeroshot_clip(f, space.name_embeddings(), tau),
            Model::ZeroShotAlbm { tau } => scoring::predict_zeroshot_albm(&scoring::activations(f, space)?, tau),
            Model::Albm { weights, tau } => scoring::predict_albm(&scoring::activations(f, space)?, weights, tau),
            Model::LbmShared { weights, tau } => {
                let owned;
                let flat = match flat {
                    Some(m) => m,
                    None => {
                        owned = space.flat_concepts();
                        &owned
                    }
                };
                let f = scoring::unit_feature(f)?;
                scoring::predict_lbm_shared(f.view(), flat.view(), weights, tau)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub top1: f64,
    /// Accuracy per class; `None` when the class has no samples.
    pub per_class: Vec<Option<f64>>,
    pub mean_loss: f64,
    pub count: usize,
}

/// Top-1 accuracy, per-class accuracy and mean cross-entropy. Samples are
/// scored in parallel; aggregation is sequential in input order.
pub fn evaluate(model: &Model, features: ArrayView2<f64>, labels: &[usize], space: &ConceptSpace) -> Result<Metrics> {
    if features.nrows() == 0 {
        return Err(AlbmError::Empty("evaluation set".into()));
    }
    if features.nrows() != labels.len() {
        return Err(AlbmError::dim("evaluation labels", features.nrows(), labels.len()));
    }
    let k = space.num_classes();
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(AlbmError::Label { label: y, classes: k });
    }
    let flat = matches!(model, Model::LbmShared { .. }).then(|| space.flat_concepts());
    let outcomes: Vec<(usize, f64)> = (0..labels.len())
        .into_par_iter()
        .map(|n| {
            let p = model.probabilities(features.row(n), space, flat.as_ref())?;
            Ok((argmax(p.view()), -p[labels[n]].max(f64::MIN_POSITIVE).ln()))
        })
        .collect::<Result<_>>()?;

    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    let mut loss = 0.0;
    for (&y, &(pred, l)) in labels.iter().zip(&outcomes) {
        total[y] += 1;
        if pred == y {
            correct[y] += 1;
        }
        loss += l;
    }
    let n = labels.len();
    Ok(Metrics {
        top1: correct.iter().sum::<usize>() as f64 / n as f64,
        per_class: correct
            .iter()
            .zip(&total)
            .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
            .collect(),
        mean_loss: loss / n as f64,
        count: n,
    })
}

/// Training-set accuracy of class-local weights on precomputed activations.
pub fn activation_accuracy(weights: ArrayView2<f64>, data: &LabeledActivations) -> Result<f64> {
    let mut correct = 0;
    for (s, &y) in data.items().iter().zip(data.labels()) {
        if argmax(scoring::albm_logits(s, weights)?.view()) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
