//! Planted-signal images for exercising prompt training.
//!
//! Each attribute owns one patch location. A class is a set of random
//! patterns, one per attribute, stamped at those locations over Gaussian
//! noise. The "text" embedding of concept `(i, j)` is what a probe prompt
//! equal to the positional embedding of attribute `j`'s patch reads from a
//! clean prototype of class `i`. The probe is class-agnostic, so a single
//! learned prompt per attribute can reach every concept.

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vit::{ToyViT, ToyViTConfig};
use crate::concept_space::{AttributeSet, ConceptSpace, ConceptTable, Provenance};
use crate::error::{AlbmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedTaskConfig {
    pub classes: usize,
    pub attributes: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the planted patterns.
    pub signal: f64,
    /// Standard deviation of the background noise.
    pub noise: f64,
    pub seed: u64,
    pub vit: ToyViTConfig,
}

impl Default for PlantedTaskConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            attributes: 3,
            samples_per_class: 16,
            signal: 1.0,
            noise: 0.2,
            seed: 0,
            vit: ToyViTConfig::default(),
        }
    }
}

pub struct PlantedTask {
    pub vit: ToyViT,
    pub space: ConceptSpace,
    pub images: Vec<Array3<f64>>,
    pub labels: Vec<usize>,
    /// Patch index owned by each attribute.
    pub locations: Vec<usize>,
}

impl PlantedTask {
    pub fn generate(cfg: &PlantedTaskConfig) -> Result<Self> {
        let vit = ToyViT::new(cfg.vit)?;
        let vc = cfg.vit;
        if cfg.classes == 0 || cfg.samples_per_class == 0 {
            return Err(AlbmError::Argument("planted task needs classes and samples".into()));
        }
        if cfg.attributes == 0 || cfg.attributes > vc.num_patches() {
            return Err(AlbmError::Argument(format!(
                "attributes must be in 1..={} (one patch each)",
                vc.num_patches()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut locations: Vec<usize> = (0..vc.num_patches()).collect();
        locations.shuffle(&mut rng);
        locations.truncate(cfg.attributes);

        let unit = Normal::new(0.0, cfg.signal.max(0.0)).map_err(|e| AlbmError::Argument(e.to_string()))?;
        let p = vc.patch_size;
        let patterns = Array4::from_shape_simple_fn((cfg.classes, cfg.attributes, vc.channels, p * p), || {
            unit.sample(&mut rng)
        });
        let stamp = |img: &mut Array3<f64>, class: usize| {
            for (j, &loc) in locations.iter().enumerate() {
                let (gy, gx) = (loc / vc.grid(), loc % vc.grid());
                let pat = patterns.slice(s![class, j, .., ..]);
                let pat = pat.to_shape((vc.channels, p, p)).expect("patch shape");
                let mut region = img.slice_mut(s![.., gy * p..(gy + 1) * p, gx * p..(gx + 1) * p]);
                region += &pat;
            }
        };

        let shape = (vc.channels, vc.image_size, vc.image_size);
        let mut concept_embeds = ndarray::Array3::zeros((cfg.classes, cfg.attributes, vc.text_dim));
        let mut name_embeds = Array2::zeros((cfg.classes, vc.text_dim));
        let probes = vit.pos.select(Axis(0), &locations.iter().map(|&l| 1 + l).collect::<Vec<_>>());
        for class in 0..cfg.classes {
            let mut proto = Array3::zeros(shape);
            stamp(&mut proto, class);
            let out = vit.encode(proto.view(), probes.view())?;
            name_embeds.row_mut(class).assign(&out.cls_feature);
            concept_embeds.slice_mut(s![class, .., ..]).assign(&out.prompt_features);
        }

        let noise = Normal::new(0.0, cfg.noise.max(0.0)).map_err(|e| AlbmError::Argument(e.to_string()))?;
        let mut images = Vec::with_capacity(cfg.classes * cfg.samples_per_class);
        let mut labels = Vec::with_capacity(images.capacity());
        for _ in 0..cfg.samples_per_class {
            for class in 0..cfg.classes {
                let mut img = Array3::from_shape_simple_fn(shape, || noise.sample(&mut rng));
                stamp(&mut img, class);
                images.push(img);
                labels.push(class);
            }
        }

        let attributes = AttributeSet::new((0..cfg.attributes).map(|j| format!("region {j}")))?;
        let class_names = (0..cfg.classes).map(|i| format!("class {i}")).collect();
        let concepts = (0..cfg.classes)
            .map(|i| (0..cfg.attributes).map(|j| format!("pattern {i} at region {j}")).collect())
            .collect();
        let provenance = vec![vec![Provenance::Described; cfg.attributes]; cfg.classes];
        let table = ConceptTable::new(attributes, class_names, concepts, provenance)?;
        let space = ConceptSpace::assemble(table, concept_embeds, name_embeds)?;
        Ok(Self {
            vit,
            space,
            images,
            labels,
            locations,
        })
    }
}
