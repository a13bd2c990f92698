//! Synthetic embedding data in the on-disk store formats, with a ready
//! run config. Lets every eval mode run without a feature extractor.

use std::path::{Path, PathBuf};

use albm::io::{write_atomic, write_store, StoreKind};
use albm::{AttributeSet, ConceptTable, Provenance, Result};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, clap::Args)]
pub struct SynthConfig {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 4)]
    pub attributes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 24)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 24)]
    pub test_per_class: usize,
    /// Standard deviation of per-coordinate feature noise.
    #[arg(long, default_value_t = 0.4)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            attributes: 4,
            dim: 32,
            train_per_class: 24,
            test_per_class: 24,
            noise: 0.4,
            seed: 0,
        }
    }
}

fn gaussian(shape: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(shape, |_| rng.sample(StandardNormal))
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

/// Image features mix a class's concepts with attribute strengths shared
/// across classes, so weighting attributes beats their plain mean.
fn images(
    concepts: &Array3<f64>,
    strength: &[f64],
    per_class: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Vec<usize>) {
    let (k, n_a, d) = concepts.dim();
    let mut rows = Array2::zeros((k * per_class, d));
    let mut labels = Vec::with_capacity(k * per_class);
    for (n, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
        let y = n % k;
        let mut v = gaussian(d, rng) * noise;
        for j in 0..n_a {
            let jitter: f64 = rng.random_range(0.5..1.5);
            v.scaled_add(strength[j] * jitter, &concepts.index_axis(Axis(0), y).row(j));
        }
        row.assign(&unit(v));
        labels.push(y);
    }
    (rows, labels)
}

/// Writes `concepts.json`, four stores and `run.toml` into `dir`. Returns
/// the config path.
pub fn generate(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| albm::AlbmError::Io { path: dir.into(), source: e })?;
    let (k, n_a, d) = (cfg.classes, cfg.attributes, cfg.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let attributes = AttributeSet::new((0..n_a).map(|j| format!("attribute {j}")))?;
    let classes: Vec<String> = (0..k).map(|i| format!("class {i}")).collect();
    let texts = (0..k).map(|i| (0..n_a).map(|j| format!("concept {j} of class {i}")).collect()).collect();
    let table = ConceptTable::new(attributes, classes, texts, vec![vec![Provenance::Described; n_a]; k])?;
    table.save(&dir.join("concepts.json"))?;

    let mut concepts = Array3::zeros((k, n_a, d));
    for mut row in concepts.lanes_mut(Axis(2)) {
        row.assign(&unit(gaussian(d, &mut rng)));
    }
    // Names sit near the mean of their class's concepts.
    let mut names = Array2::zeros((k, d));
    for (i, mut row) in names.axis_iter_mut(Axis(0)).enumerate() {
        let mean = concepts.index_axis(Axis(0), i).mean_axis(Axis(0)).expect("n_a >= 1");
        row.assign(&unit(unit(mean) + gaussian(d, &mut rng) * (0.6 / (d as f64).sqrt())));
    }
    let strength: Vec<f64> = (0..n_a).map(|_| rng.random_range(0.1..1.0)).collect();
    let (train, train_y) = images(&concepts, &strength, cfg.train_per_class, cfg.noise, &mut rng);
    let (test, test_y) = images(&concepts, &strength, cfg.test_per_class, cfg.noise, &mut rng);

    let flat = concepts.into_shape_with_order((k * n_a, d)).expect("contiguous");
    let model = Some("synthetic");
    write_store(&dir.join("concept_emb.json"), StoreKind::Concept, "{concept}", model, flat.view(), None)?;
    write_store(&dir.join("name_emb.json"), StoreKind::Name, "{class}", model, names.view(), None)?;
    write_store(&dir.join("train.json"), StoreKind::Image, "", model, train.view(), Some(&train_y))?;
    write_store(&dir.join("test.json"), StoreKind::Image, "", model, test.view(), Some(&test_y))?;

    let config = format!(
        r#"run_id = "synthetic"
seed = {seed}

[data]
concepts = "concepts.json"
concept_store = "concept_emb.json"
name_store = "name_emb.json"
train_store = "train.json"
test_store = "test.json"

[split]
base_shots = 16

[train]
lr = 0.05
batch_size = 32
epochs = 100
"#,
        seed = cfg.seed
    );
    let path = dir.join("run.toml");
    write_atomic(&path, config.as_bytes())?;
    Ok(path)
}
