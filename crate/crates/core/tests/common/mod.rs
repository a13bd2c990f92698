#![allow(dead_code)]

pub mod oxford_pets;

use albm::{AttributeSet, ConceptSpace, ConceptTable, Provenance};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn table(k: usize, n_a: usize) -> ConceptTable {
    let attributes = AttributeSet::new((0..n_a).map(|j| format!("attr{j}"))).unwrap();
    let classes = (0..k).map(|i| format!("class{i}")).collect();
    let concepts = (0..k)
        .map(|i| (0..n_a).map(|j| format!("concept {i}/{j}")).collect())
        .collect();
    ConceptTable::new(attributes, classes, concepts, vec![vec![Provenance::Described; n_a]; k]).unwrap()
}

pub fn unit_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        row /= n;
    }
    m
}

pub fn unit_vector(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let v: Array1<f64> = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
    let n = v.dot(&v).sqrt();
    v / n
}

pub fn random_space(k: usize, n_a: usize, d: usize, rng: &mut ChaCha8Rng) -> ConceptSpace {
    let c = Array3::from_shape_fn((k, n_a, d), |_| rng.random_range(-1.0..1.0));
    let names = Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0));
    ConceptSpace::assemble(table(k, n_a), c, unit_rows(names)).unwrap()
}

/// Plain-loop softmax used by oracles.
pub fn oracle_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
