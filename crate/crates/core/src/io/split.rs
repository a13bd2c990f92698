//! Base/novel class splits and seeded few-shot sampling.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AlbmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    /// First `ceil(K/2)` classes are base, the rest novel.
    #[default]
    HalfHalf,
}

impl fmt::Display for SplitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitRule::HalfHalf => f.write_str("half-half"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub base: Vec<usize>,
    pub novel: Vec<usize>,
    pub shots: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(base: Vec<usize>, novel: Vec<usize>, shots: usize, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(AlbmError::Split("shots must be >= 1".into()));
        }
        if let Some(c) = base.iter().find(|c| novel.contains(c)) {
            return Err(AlbmError::Split(format!("class {c} is both base and novel")));
        }
        Ok(Self {
            base,
            novel,
            shots,
            seed,
        })
    }
}

pub fn split_base_novel(k_total: usize, rule: SplitRule, shots: usize, seed: u64) -> Result<SplitSpec> {
    if k_total < 2 {
        return Err(AlbmError::Split(format!(
            "need at least 2 classes to split, got {k_total}"
        )));
    }
    match rule {
        SplitRule::HalfHalf => {
            let n_base = k_total.div_ceil(2);
            SplitSpec::new((0..n_base).collect(), (n_base..k_total).collect(), shots, seed)
        }
    }
}

/// Picks `k` sample indices per class (`0..num_classes`), seeded.
///
/// Classes with fewer than `k` samples contribute all of them. Output is
/// grouped by class, indices ascending within a class.
pub fn sample_fewshot(labels: &[usize], num_classes: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(AlbmError::Split("shots must be >= 1".into()));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (idx, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(AlbmError::Label {
                label: y,
                classes: num_classes,
            });
        }
        by_class[y].push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_classes * k);
    for (class, mut pool) in by_class.into_iter().enumerate() {
        if pool.is_empty() {
            return Err(AlbmError::Split(format!("class {class} has no samples")));
        }
        if pool.len() < k {
            log::warn!(
                "class {class} has {} samples, fewer than {k} shots; using all",
                pool.len()
            );
        }
        pool.shuffle(&mut rng);
        pool.truncate(k);
        pool.sort_unstable();
        out.extend(pool);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn two_classes() {
        let s = split_base_novel(2, SplitRule::HalfHalf, 16, 0).unwrap();
        assert_eq!((s.base, s.novel), (vec![0], vec![1]));
    }

    #[test]
    fn odd_count_favors_base() {
        let s = split_base_novel(7, SplitRule::HalfHalf, 16, 0).unwrap();
        assert_eq!((s.base.len(), s.novel.len()), (4, 3));
    }

    #[test]
    fn too_few_classes() {
        assert!(matches!(split_base_novel(1, SplitRule::HalfHalf, 1, 0), Err(AlbmError::Split(_))));
    }

    #[test]
    fn one_shot_one_sample() {
        assert_eq!(sample_fewshot(&[0, 1, 2], 3, 1, 5).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn seeded_selection_repeats() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        assert_eq!(
            sample_fewshot(&labels, 4, 5, 42).unwrap(),
            sample_fewshot(&labels, 4, 5, 42).unwrap()
        );
    }

    #[test]
    fn empty_class_is_split_error() {
        assert!(matches!(sample_fewshot(&[0, 0, 2], 3, 1, 0), Err(AlbmError::Split(_))));
    }

    #[test]
    fn short_class_gives_everything() {
        let picked = sample_fewshot(&[0, 0, 0, 1], 2, 2, 0).unwrap();
        assert_eq!(picked.len(), 3);
        assert!(picked.contains(&3));
    }

    proptest! {
        #[test]
        fn split_partitions_classes(k in 2usize..200) {
            let s = split_base_novel(k, SplitRule::HalfHalf, 1, 0).unwrap();
            let base: BTreeSet<_> = s.base.iter().copied().collect();
            let novel: BTreeSet<_> = s.novel.iter().copied().collect();
            prop_assert!(base.is_disjoint(&novel));
            let all: BTreeSet<_> = base.union(&novel).copied().collect();
            prop_assert_eq!(all, (0..k).collect::<BTreeSet<_>>());
        }

        #[test]
        fn per_class_counts_match_recount(
            labels in proptest::collection::vec(0usize..5, 5..200),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut counts = [0usize; 5];
            for &y in &labels { counts[y] += 1; }
            prop_assume!(counts.iter().all(|&c| c > 0));
            let picked = sample_fewshot(&labels, 5, k, seed).unwrap();
            let mut got = [0usize; 5];
            for &i in &picked { got[labels[i]] += 1; }
            for c in 0..5 {
                prop_assert_eq!(got[c], counts[c].min(k));
            }
            let distinct: BTreeSet<_> = picked.iter().collect();
            prop_assert_eq!(distinct.len(), picked.len());
        }
    }
}
