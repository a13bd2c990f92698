//! Browser demo: a small pet-breed concept space with synthetic embeddings.
//! Every method returns JSON for the page script to draw.

use albm::classifier::{
    evaluate, prune_to_nec, train_walpha, transfer_coefficients, transfer_to_novel, ConceptClassifier,
    LabeledActivations, Model, TrainConfig,
};
use albm::scoring::{self, predict_zeroshot_albm, predict_zeroshot_clip, CLIP_TEMPERATURE};
use albm::{AttributeSet, ConceptSpace, ConceptTable, Provenance};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const ATTRIBUTES: [&str; 4] = ["fur", "ears", "snout", "tail"];

/// (class, is a cat, concept per attribute). The first half are base
/// classes, the rest novel.
const CLASSES: [(&str, bool, [&str; 4]); 6] = [
    ("Abyssinian", true, ["short ticked ruddy fur", "large pointed ears", "small wedge snout", "long tapering tail"]),
    ("Beagle", false, ["short tricolor coat", "long floppy ears", "medium square muzzle", "white-tipped tail"]),
    ("Persian", true, ["long silky fur", "small rounded ears", "flat pushed-in face", "short bushy tail"]),
    ("Boxer", false, ["short fawn coat", "folded high-set ears", "short broad muzzle", "docked tail"]),
    ("Bengal", true, ["spotted golden pelt", "medium rounded ears", "broad nose", "thick banded tail"]),
    ("Pug", false, ["smooth fawn coat", "small button ears", "very short wrinkled muzzle", "tightly curled tail"]),
];

const DIM: usize = 24;
const PER_CLASS: usize = 20;
const N_BASE: usize = 3;

type Res<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(value: &T) -> Res<String> {
    serde_json::to_string(value).map_err(err)
}

fn gaussian(rng: &mut ChaCha8Rng, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(DIM, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

#[wasm_bindgen]
pub struct Demo {
    space: ConceptSpace,
    features: Array2<f64>,
    labels: Vec<usize>,
    /// Class-local weights trained on all six classes.
    weights: ConceptClassifier,
    /// Trained on the base classes only.
    base: ConceptClassifier,
}

#[derive(Serialize)]
struct Activation<'a> {
    label: usize,
    classes: &'a [String],
    attributes: &'a [String],
    concepts: &'a [Vec<String>],
    scores: Vec<Vec<f64>>,
    zeroshot_albm: Vec<f64>,
    zeroshot_clip: Vec<f64>,
    trained: Vec<f64>,
}

#[derive(Serialize)]
struct Transfer {
    novel: String,
    base: Vec<String>,
    coefficients: Vec<f64>,
    base_weights: Vec<Vec<f64>>,
    novel_weights: Vec<f64>,
    /// Accuracy over the novel classes' samples with transferred weights.
    novel_top1: f64,
}

#[derive(Serialize)]
struct NecPoint {
    nec: usize,
    top1: f64,
    weights: Vec<Vec<f64>>,
}

#[wasm_bindgen]
impl Demo {
    /// Generates the embeddings for `seed` and trains both classifiers.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Self::build(seed).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter)]
    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// Concept activations of one sample and the zero-shot and trained
    /// class probabilities.
    pub fn activation(&self, sample: usize, tau: f64) -> Result<String, JsError> {
        self.activation_json(sample, tau).map_err(|e| JsError::new(&e))
    }

    /// Weights for one novel class mixed from the base classes, and the
    /// accuracy of all transferred rows on novel samples.
    pub fn transfer(&self, novel: usize, tau: f64) -> Result<String, JsError> {
        self.transfer_json(novel, tau).map_err(|e| JsError::new(&e))
    }

    /// Accuracy and surviving weights at every number of effective concepts.
    pub fn nec_sweep(&self) -> Result<String, JsError> {
        self.nec_json().map_err(|e| JsError::new(&e))
    }
}

impl Demo {
    pub fn build(seed: u32) -> Res<Demo> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let (k, n_a) = (CLASSES.len(), ATTRIBUTES.len());
        let attributes = AttributeSet::new(ATTRIBUTES).map_err(err)?;
        let names: Vec<String> = CLASSES.iter().map(|c| c.0.to_string()).collect();
        let texts = CLASSES.iter().map(|c| c.2.iter().map(|t| t.to_string()).collect()).collect();
        let table = ConceptTable::new(attributes, names, texts, vec![vec![Provenance::Described; n_a]; k])
            .map_err(err)?;

        // Cats and dogs each share a direction, so names of novel breeds
        // resemble the base breeds of the same kind.
        let kinds = [unit(gaussian(&mut rng, 1.0)), unit(gaussian(&mut rng, 1.0))];
        let attr_dirs: Vec<_> = (0..n_a).map(|_| unit(gaussian(&mut rng, 1.0))).collect();
        let mut concepts = Array3::zeros((k, n_a, DIM));
        let mut name_embeds = Array2::zeros((k, DIM));
        for (i, (_, cat, _)) in CLASSES.iter().enumerate() {
            let kind = &kinds[usize::from(!cat)];
            let mut mean = Array1::zeros(DIM);
            for j in 0..n_a {
                let c = unit(&attr_dirs[j] * 0.5 + kind * 0.5 + gaussian(&mut rng, 0.2));
                mean += &c;
                concepts.index_axis_mut(Axis(0), i).row_mut(j).assign(&c);
            }
            name_embeds.row_mut(i).assign(&unit(unit(mean) + gaussian(&mut rng, 0.1)));
        }
        let space = ConceptSpace::assemble(table, concepts, name_embeds).map_err(err)?;

        // Attributes differ in how visible they are in the images.
        let strength = [1.0, 0.6, 0.9, 0.3];
        let mut features = Array2::zeros((k * PER_CLASS, DIM));
        let mut labels = Vec::with_capacity(k * PER_CLASS);
        for (n, mut row) in features.axis_iter_mut(Axis(0)).enumerate() {
            let y = n % k;
            let mut v = gaussian(&mut rng, 0.12);
            for (j, s) in strength.iter().enumerate() {
                v.scaled_add(s * rng.random_range(0.5..1.5), &space.concept(y, j));
            }
            row.assign(&unit(v));
            labels.push(y);
        }

        let cfg = TrainConfig { lr: 0.05, batch_size: 16, epochs: 150, seed: seed as u64, ..Default::default() };
        let all = LabeledActivations::from_features(features.view(), &labels, &space).map_err(err)?;
        let weights = train_walpha(&all, space.table().class_names(), &cfg).map_err(err)?.classifier;
        let base_ids: Vec<usize> = (0..N_BASE).collect();
        let base_space = space.restrict(&base_ids).map_err(err)?;
        let keep: Vec<usize> = (0..labels.len()).filter(|&n| labels[n] < N_BASE).collect();
        let base_x = features.select(Axis(0), &keep);
        let base_y: Vec<usize> = keep.iter().map(|&n| labels[n]).collect();
        let base_data = LabeledActivations::from_features(base_x.view(), &base_y, &base_space).map_err(err)?;
        let base = train_walpha(&base_data, base_space.table().class_names(), &cfg).map_err(err)?.classifier;
        Ok(Demo { space, features, labels, weights, base })
    }

    pub fn activation_json(&self, sample: usize, tau: f64) -> Res<String> {
        if sample >= self.labels.len() {
            return Err(format!("sample {sample} out of range"));
        }
        let f = self.features.row(sample);
        let s = scoring::activations(f, &self.space).map_err(err)?;
        let table = self.space.table();
        let out = Activation {
            label: self.labels[sample],
            classes: table.class_names(),
            attributes: table.attributes().names(),
            concepts: table.rows(),
            scores: rows(&s.scores),
            zeroshot_albm: predict_zeroshot_albm(&s, tau).map_err(err)?.to_vec(),
            zeroshot_clip: predict_zeroshot_clip(f, self.space.name_embeddings(), CLIP_TEMPERATURE)
                .map_err(err)?
                .to_vec(),
            trained: scoring::predict_albm(&s, self.weights.weights.view(), 1.0).map_err(err)?.to_vec(),
        };
        to_json(&out)
    }

    pub fn transfer_json(&self, novel: usize, tau: f64) -> Res<String> {
        let k = CLASSES.len();
        if !(N_BASE..k).contains(&novel) {
            return Err(format!("class {novel} is not a novel class"));
        }
        let names = self.space.name_embeddings();
        let base_names = names.slice(ndarray::s![..N_BASE, ..]);
        let novel_names = names.slice(ndarray::s![N_BASE.., ..]);
        let coeffs = transfer_coefficients(base_names, novel_names, tau).map_err(err)?;
        let novel_w = transfer_to_novel(&self.base, base_names, novel_names, tau).map_err(err)?;

        let novel_ids: Vec<usize> = (N_BASE..k).collect();
        let novel_space = self.space.restrict(&novel_ids).map_err(err)?;
        let keep: Vec<usize> = (0..self.labels.len()).filter(|&n| self.labels[n] >= N_BASE).collect();
        let x = self.features.select(Axis(0), &keep);
        let y: Vec<usize> = keep.iter().map(|&n| self.labels[n] - N_BASE).collect();
        let m = evaluate(&Model::Albm { weights: novel_w.view(), tau: 1.0 }, x.view(), &y, &novel_space)
            .map_err(err)?;

        let classes = self.space.table().class_names();
        to_json(&Transfer {
            novel: classes[novel].clone(),
            base: classes[..N_BASE].to_vec(),
            coefficients: coeffs.row(novel - N_BASE).to_vec(),
            base_weights: rows(&self.base.weights),
            novel_weights: novel_w.row(novel - N_BASE).to_vec(),
            novel_top1: m.top1,
        })
    }

    pub fn nec_json(&self) -> Res<String> {
        let mut points = Vec::new();
        for nec in 1..=ATTRIBUTES.len() {
            let pruned = prune_to_nec(&self.weights, nec).map_err(err)?;
            let model = Model::Albm { weights: pruned.weights.view(), tau: 1.0 };
            let m = evaluate(&model, self.features.view(), &self.labels, &self.space).map_err(err)?;
            points.push(NecPoint { nec, top1: m.top1, weights: rows(&pruned.weights) });
        }
        to_json(&points)
    }
}
