//! Concept activation scores and the four inference rules: zero-shot CLIP,
//! the class-shared bottleneck baseline, zero-shot mean scoring in the
//! attribute-formed space, and the trained class-local concept classifier.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::concept_space::ConceptSpace;
use crate::error::{AlbmError, Result};
use crate::linalg::{argmax, ensure_finite, l2_norm, softmax};

/// Tolerance on `|f| - 1` before an input feature is renormalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// CLIP's conventional logit temperature.
pub const CLIP_TEMPERATURE: f64 = 0.01;

/// `K x N_a` cosine scores of one sample against every class's concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    pub scores: Array2<f64>,
    pub sample_id: Option<usize>,
}

impl ActivationMatrix {
    pub fn new(scores: Array2<f64>) -> Self {
        Self {
            scores,
            sample_id: None,
        }
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.sample_id = Some(id);
        self
    }

    pub fn num_classes(&self) -> usize {
        self.scores.nrows()
    }

    pub fn num_attributes(&self) -> usize {
        self.scores.ncols()
    }

    /// Scores of class `i`'s own concepts.
    pub fn class_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.scores.row(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Temperature for zero-shot rules.
    pub temperature: f64,
    /// Temperature for trained concept-classifier logits.
    pub albm_temperature: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            temperature: CLIP_TEMPERATURE,
            albm_temperature: 1.0,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("temperature", self.temperature),
            ("albm_temperature", self.albm_temperature),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(AlbmError::Argument(format!("{name} must be > 0, got {t}")));
            }
        }
        Ok(())
    }
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(AlbmError::Argument(format!("temperature must be > 0, got {tau}")))
    }
}

/// Returns `f` normalized to unit length, warning when it was noticeably off.
pub fn unit_feature(f: ArrayView1<f64>) -> Result<Array1<f64>> {
    ensure_finite(&f, "image feature")?;
    let norm = l2_norm(f);
    if norm == 0.0 {
        return Err(AlbmError::Argument("zero image feature".into()));
    }
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        log::warn!("image feature has norm {norm:.6}; normalizing");
        Ok(f.mapv(|x| x / norm))
    } else {
        Ok(f.to_owned())
    }
}

/// `S[i][j] = <C[i][j], f>`.
pub fn activations(f: ArrayView1<f64>, space: &ConceptSpace) -> Result<ActivationMatrix> {
    if f.len() != space.dim() {
        return Err(AlbmError::dim("image feature", space.dim(), f.len()));
    }
    let f = unit_feature(f)?;
    let (k, n_a, d) = space.embeddings().dim();
    let flat = space
        .embeddings()
        .to_shape((k * n_a, d))
        .expect("contiguous concept tensor");
    let scores = flat
        .dot(&f)
        .into_shape_with_order((k, n_a))
        .expect("k * n_a scores");
    Ok(ActivationMatrix::new(scores))
}

/// Activations for every row of a feature matrix.
pub fn activations_batch(features: ArrayView2<f64>, space: &ConceptSpace) -> Result<Vec<ActivationMatrix>> {
    features
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(n, f)| activations(f, space).map(|a| a.with_id(n)))
        .collect()
}

/// Zero-shot mean scoring: `logit_i = mean_j S[i][j]`.
pub fn zeroshot_albm_logits(s: &ActivationMatrix) -> Result<Array1<f64>> {
    ensure_finite(&s.scores, "activation matrix")?;
    s.scores
        .mean_axis(Axis(1))
        .ok_or_else(|| AlbmError::Empty("activation matrix has no attributes".into()))
}

pub fn predict_zeroshot_albm(s: &ActivationMatrix, tau: f64) -> Result<Array1<f64>> {
    check_temperature(tau)?;
    let logits = zeroshot_albm_logits(s)?;
    Ok(softmax((logits / tau).view()))
}

/// Class-local logits: `logit_i = <w_a^i, s_i>`, only class `i`'s own
/// concept scores feed class `i`.
pub fn albm_logits(s: &ActivationMatrix, weights: ArrayView2<f64>) -> Result<Array1<f64>> {
    if s.scores.dim() != weights.dim() {
        return Err(AlbmError::dim(
            "concept classifier weights",
            format!("{:?}", s.scores.dim()),
            format!("{:?}", weights.dim()),
        ));
    }
    ensure_finite(&s.scores, "activation matrix")?;
    Ok((&s.scores * &weights).sum_axis(Axis(1)))
}

pub fn predict_albm(s: &ActivationMatrix, weights: ArrayView2<f64>, tau: f64) -> Result<Array1<f64>> {
    check_temperature(tau)?;
    let logits = albm_logits(s, weights)?;
    Ok(softmax((logits / tau).view()))
}

/// Class-shared concept scores `C_flat . f`, one per concept.
pub fn shared_concept_scores(f: ArrayView1<f64>, flat_concepts: ArrayView2<f64>) -> Result<Array1<f64>> {
    if f.len() != flat_concepts.ncols() {
        return Err(AlbmError::dim("image feature", flat_concepts.ncols(), f.len()));
    }
    ensure_finite(&f, "image feature")?;
    Ok(flat_concepts.dot(&f))
}

pub fn lbm_shared_logits(
    f: ArrayView1<f64>,
    flat_concepts: ArrayView2<f64>,
    weights: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let scores = shared_concept_scores(f, flat_concepts)?;
    if weights.ncols() != scores.len() {
        return Err(AlbmError::dim("shared classifier columns", scores.len(), weights.ncols()));
    }
    Ok(weights.dot(&scores))
}

/// Baseline bottleneck over all concepts of all classes:
/// `logit_i = w_p^i . C_flat . f`.
pub fn predict_lbm_shared(
    f: ArrayView1<f64>,
    flat_concepts: ArrayView2<f64>,
    weights: ArrayView2<f64>,
    tau: f64,
) -> Result<Array1<f64>> {
    check_temperature(tau)?;
    let logits = lbm_shared_logits(f, flat_concepts, weights)?;
    Ok(softmax((logits / tau).view()))
}

/// Softmax of cosine similarity to class-name embeddings over `tau`.
pub fn predict_zeroshot_clip(
    f: ArrayView1<f64>,
    name_embeddings: ArrayView2<f64>,
    tau: f64,
) -> Result<Array1<f64>> {
    check_temperature(tau)?;
    if f.len() != name_embeddings.ncols() {
        return Err(AlbmError::dim("image feature", name_embeddings.ncols(), f.len()));
    }
    let f = unit_feature(f)?;
    let logits = name_embeddings.dot(&f);
    Ok(softmax((logits / tau).view()))
}

/// Predicted class: highest probability, lowest index on ties.
pub fn predicted_class(probabilities: &Array1<f64>) -> usize {
    argmax(probabilities.view())
}
