//! Loads and cross-checks the inputs named by a run config.

use std::path::PathBuf;

use albm::io::{load_store, EmbeddingStore, StoreKind};
use albm::{AlbmError, ConceptSpace, ConceptTable, Result};
use ndarray::{Array2, Array3};

use crate::config::RunConfig;

/// Image features and labels of one split.
#[derive(Debug, Clone)]
pub struct Split {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples whose label is in `classes`, relabeled to positions in `classes`.
    pub fn restrict(&self, classes: &[usize]) -> Split {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (n, &y) in self.labels.iter().enumerate() {
            if let Some(pos) = classes.iter().position(|&c| c == y) {
                rows.push(n);
                labels.push(pos);
            }
        }
        Split {
            features: self.features.select(ndarray::Axis(0), &rows),
            labels,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Split {
        Split {
            features: self.features.select(ndarray::Axis(0), indices),
            labels: indices.iter().map(|&n| self.labels[n]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub space: ConceptSpace,
    pub train: Option<Split>,
    pub test: Split,
}

/// Loads the concept file, concept and name stores, the test store and
/// (when `with_train`) the train store. Shape problems across inputs are
/// collected and reported together.
pub fn load(cfg: &RunConfig, with_train: bool) -> Result<Dataset> {
    let d = &cfg.data;
    let mut wanted: Vec<(&str, &Option<PathBuf>)> = vec![
        ("data.concepts", &d.concepts),
        ("data.concept_store", &d.concept_store),
        ("data.name_store", &d.name_store),
        ("data.test_store", &d.test_store),
    ];
    if with_train {
        wanted.push(("data.train_store", &d.train_store));
    }
    let paths = cfg.require(&wanted)?;
    let table = ConceptTable::load(&paths[0])?;
    let concepts = load_store(&paths[1])?;
    let names = load_store(&paths[2])?;
    let test = load_store(&paths[3])?;
    let train = if with_train { Some(load_store(&paths[4])?) } else { None };

    let (k, n_a) = (table.num_classes(), table.num_attributes());
    let dim = concepts.manifest.d;
    let mut problems = Vec::new();
    check_kind(&mut problems, "concept store", &concepts, StoreKind::Concept);
    check_kind(&mut problems, "name store", &names, StoreKind::Name);
    if concepts.manifest.count != k * n_a {
        problems.push(format!(
            "concept store has {} rows, concept file implies K x N_a = {k} x {n_a} = {}",
            concepts.manifest.count,
            k * n_a
        ));
    }
    if names.manifest.count != k {
        problems.push(format!("name store has {} rows, concept file has K = {k} classes", names.manifest.count));
    }
    let mut images = vec![("test store", &test)];
    if let Some(t) = &train {
        images.push(("train store", t));
    }
    if names.manifest.d != dim {
        problems.push(format!("name store has d = {}, concept store d = {dim}", names.manifest.d));
    }
    for (label, store) in &images {
        check_kind(&mut problems, label, store, StoreKind::Image);
        if store.manifest.d != dim {
            problems.push(format!("{label} has d = {}, concept store d = {dim}", store.manifest.d));
        }
        match &store.labels {
            None => problems.push(format!("{label} has no labels file")),
            Some(l) => {
                if let Some(&bad) = l.iter().find(|&&y| y >= k) {
                    problems.push(format!("{label} has label {bad}, but only {k} classes"));
                }
            }
        }
    }
    if !problems.is_empty() {
        return Err(AlbmError::Config(problems));
    }

    let grid = Array3::from_shape_vec((k, n_a, dim), concepts.data.into_raw_vec_and_offset().0)
        .expect("row count checked above");
    let space = ConceptSpace::assemble(table, grid, names.data)?;
    Ok(Dataset {
        space,
        train: train.map(into_split),
        test: into_split(test),
    })
}

fn check_kind(problems: &mut Vec<String>, label: &str, store: &EmbeddingStore, kind: StoreKind) {
    if store.manifest.kind != kind {
        problems.push(format!("{label} has kind {}, expected {kind}", store.manifest.kind));
    }
}

fn into_split(store: EmbeddingStore) -> Split {
    Split {
        labels: store.labels.unwrap_or_default(),
        features: store.data,
    }
}
