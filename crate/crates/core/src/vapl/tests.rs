use ndarray::{array, s, Array, Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::{PlantedTask, PlantedTaskConfig};
use super::*;
use crate::concept_space::tests::random_space;

fn micro_config(seed: u64) -> ToyViTConfig {
    ToyViTConfig {
        image_size: 8,
        patch_size: 4,
        channels: 1,
        embed_dim: 8,
        layers: 2,
        heads: 2,
        mlp_ratio: 2,
        text_dim: 5,
        seed,
    }
}

fn random_image(cfg: &ToyViTConfig, rng: &mut ChaCha8Rng) -> Array3<f64> {
    Array::from_shape_fn((cfg.channels, cfg.image_size, cfg.image_size), |_| rng.random_range(-1.0..1.0))
}

fn random_prompts(n: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> AttributePrompts {
    AttributePrompts {
        vectors: Array::from_shape_fn((n, d), |_| rng.random_range(-scale..scale)),
        frozen: false,
    }
}

/// Loss through the full masked forward pass, independent of the cached
/// prompt-row path used for gradients.
fn full_loss(vit: &ToyViT, prompts: &Array2<f64>, images: &[Array3<f64>], labels: &[usize], space: &ConceptSpace, tau: f64) -> f64 {
    let p = AttributePrompts {
        vectors: prompts.clone(),
        frozen: false,
    };
    let mut total = 0.0;
    for (img, &y) in images.iter().zip(labels) {
        let out = forward(img.view(), vit, &p).unwrap();
        let s = attribute_scores(&out.attr_features, space).unwrap();
        total += prompt_loss(&s, y, tau).unwrap();
    }
    total / images.len() as f64
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn prompt_gradient_matches_finite_differences() {
    let cfg = micro_config(3);
    let vit = ToyViT::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let space = random_space(3, 2, cfg.text_dim, 8);
    let images: Vec<_> = (0..3).map(|_| random_image(&cfg, &mut rng)).collect();
    let labels = vec![0, 2, 1];
    for tau in [1.0, 0.1] {
        let prompts = random_prompts(2, cfg.embed_dim, 1.0, &mut rng);
        let contexts: Vec<_> = images.iter().map(|i| vit.context(i.view()).unwrap()).collect();
        let (loss, grad) =
            prompt_loss_and_grad(&vit, prompts.vectors.view(), &contexts, &labels, &[0, 1, 2], &space, tau).unwrap();
        assert!((loss - full_loss(&vit, &prompts.vectors, &images, &labels, &space, tau)).abs() < 1e-10);
        let eps = 1e-4;
        let mut worst: f64 = 0.0;
        for j in 0..2 {
            for c in 0..cfg.embed_dim {
                let mut plus = prompts.vectors.clone();
                plus[[j, c]] += eps;
                let mut minus = prompts.vectors.clone();
                minus[[j, c]] -= eps;
                let numeric = (full_loss(&vit, &plus, &images, &labels, &space, tau)
                    - full_loss(&vit, &minus, &images, &labels, &space, tau))
                    / (2.0 * eps);
                worst = worst.max(rel_err(grad[[j, c]], numeric));
            }
        }
        assert!(worst < 1e-3, "tau {tau}: max relative error {worst}");
    }
}

#[test]
fn cached_prompt_path_matches_full_forward() {
    let cfg = ToyViTConfig { seed: 4, ..Default::default() };
    let vit = ToyViT::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(&cfg, &mut rng);
    let prompts = random_prompts(3, cfg.embed_dim, 1.0, &mut rng);
    let full = forward(img.view(), &vit, &prompts).unwrap();
    let ctx = vit.context(img.view()).unwrap();
    for j in 0..3 {
        let trace = vit.prompt_forward(&ctx, prompts.vectors.row(j));
        for (a, b) in trace.feature.iter().zip(full.attr_features.rows().row(j)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
    for (a, b) in ctx.cls_feature.iter().zip(&full.cls_feature) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn prompts_never_change_image_tokens() {
    for seed in 0..3 {
        let cfg = ToyViTConfig { seed, ..Default::default() };
        let vit = ToyViT::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let img = random_image(&cfg, &mut rng);
        let n_ctx = 1 + cfg.num_patches();
        let bare = vit.encode(img.view(), Array2::zeros((0, cfg.embed_dim)).view()).unwrap();
        for n in [1, 4] {
            let p = random_prompts(n, cfg.embed_dim, 3.0, &mut rng);
            let with = vit.encode(img.view(), p.vectors.view()).unwrap();
            let diff = (&with.tokens.slice(s![..n_ctx, ..]) - &bare.tokens).mapv(f64::abs);
            assert!(diff.iter().all(|&d| d < 1e-6));
            assert!((&with.cls_feature - &bare.cls_feature).iter().all(|d| d.abs() < 1e-6));
        }
    }
}

#[test]
fn permuting_prompts_permutes_features() {
    let cfg = ToyViTConfig { seed: 9, ..Default::default() };
    let vit = ToyViT::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&cfg, &mut rng);
    let p = random_prompts(4, cfg.embed_dim, 1.0, &mut rng);
    let perm = [2, 0, 3, 1];
    let permuted = AttributePrompts {
        vectors: p.vectors.select(ndarray::Axis(0), &perm),
        frozen: false,
    };
    let a = forward(img.view(), &vit, &p).unwrap();
    let b = forward(img.view(), &vit, &permuted).unwrap();
    for (row, &src) in perm.iter().enumerate() {
        assert_eq!(b.attr_features.rows().row(row), a.attr_features.rows().row(src));
    }
}

#[test]
fn prompt_features_are_independent_of_other_prompts() {
    let cfg = micro_config(6);
    let vit = ToyViT::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let img = random_image(&cfg, &mut rng);
    let p = random_prompts(3, cfg.embed_dim, 1.0, &mut rng);
    let base = forward(img.view(), &vit, &p).unwrap();
    let mut moved = p.clone();
    moved.vectors.row_mut(1).mapv_inplace(|x| x + 0.5);
    let after = forward(img.view(), &vit, &moved).unwrap();
    for j in [0, 2] {
        assert_eq!(base.attr_features.rows().row(j), after.attr_features.rows().row(j));
    }
    assert_ne!(base.attr_features.rows().row(1), after.attr_features.rows().row(1));
}

fn oracle_ln(x: &[f64], g: &Array1<f64>, b: &Array1<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let mean: f64 = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g[i] + b[i])
        .collect()
}

fn oracle_affine(x: &[f64], lin: &Linear) -> Vec<f64> {
    (0..lin.w.ncols())
        .map(|o| lin.b[o] + (0..x.len()).map(|i| x[i] * lin.w[[i, o]]).sum::<f64>())
        .collect()
}

#[test]
fn two_token_block_matches_hand_oracle() {
    let cfg = ToyViTConfig {
        image_size: 2,
        patch_size: 2,
        channels: 1,
        embed_dim: 4,
        layers: 1,
        heads: 1,
        mlp_ratio: 2,
        text_dim: 3,
        seed: 12,
    };
    let vit = ToyViT::new(cfg).unwrap();
    let img = array![[[0.5, -1.0], [0.25, 2.0]]];
    let out = vit.encode(img.view(), Array2::zeros((0, 4)).view()).unwrap();

    let pixels = [0.5, -1.0, 0.25, 2.0];
    let patch_tok = oracle_affine(&pixels, &vit.patch);
    let tokens: Vec<Vec<f64>> = vec![
        (0..4).map(|c| vit.cls[c] + vit.pos[[0, c]]).collect(),
        (0..4).map(|c| patch_tok[c] + vit.pos[[1, c]]).collect(),
    ];
    let blk = &vit.blocks[0];
    let h: Vec<Vec<f64>> = tokens.iter().map(|t| oracle_ln(t, &blk.ln1.gamma, &blk.ln1.beta)).collect();
    let q: Vec<_> = h.iter().map(|x| oracle_affine(x, &blk.q)).collect();
    let k: Vec<_> = h.iter().map(|x| oracle_affine(x, &blk.k)).collect();
    let v: Vec<_> = h.iter().map(|x| oracle_affine(x, &blk.v)).collect();
    let mut finals = Vec::new();
    for i in 0..2 {
        let s: Vec<f64> = (0..2)
            .map(|j| (0..4).map(|c| q[i][c] * k[j][c]).sum::<f64>() / 2.0)
            .collect();
        let m = s[0].max(s[1]);
        let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let a: Vec<f64> = e.iter().map(|x| x / (e[0] + e[1])).collect();
        let attn: Vec<f64> = (0..4).map(|c| a[0] * v[0][c] + a[1] * v[1][c]).collect();
        let o = oracle_affine(&attn, &blk.o);
        let x1: Vec<f64> = (0..4).map(|c| tokens[i][c] + o[c]).collect();
        let u = oracle_ln(&x1, &blk.ln2.gamma, &blk.ln2.beta);
        let z = oracle_affine(&u, &blk.fc1);
        let g: Vec<f64> = z
            .iter()
            .map(|&z| 0.5 * z * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh()))
            .collect();
        let mlp = oracle_affine(&g, &blk.fc2);
        finals.push((0..4).map(|c| x1[c] + mlp[c]).collect::<Vec<f64>>());
    }
    for i in 0..2 {
        for c in 0..4 {
            assert!((out.tokens[[i, c]] - finals[i][c]).abs() < 1e-6);
        }
    }
    let y = oracle_ln(&finals[0], &vit.ln_f.gamma, &vit.ln_f.beta);
    let r: Vec<f64> = (0..3).map(|o| (0..4).map(|c| y[c] * vit.proj[[c, o]]).sum::<f64>()).collect();
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    for o in 0..3 {
        assert!((out.cls_feature[o] - r[o] / norm).abs() < 1e-6);
    }
}

#[test]
fn wrong_image_size_is_dimension_error() {
    let vit = ToyViT::new(micro_config(0)).unwrap();
    let p = AttributePrompts::init(2, 8, 0);
    let err = forward(Array3::zeros((1, 4, 4)).view(), &vit, &p).unwrap_err();
    assert!(matches!(err, AlbmError::Dimension { .. }));
}

#[test]
fn config_rejects_ragged_patches_and_heads() {
    let bad = ToyViTConfig { image_size: 30, ..Default::default() };
    assert!(matches!(ToyViT::new(bad), Err(AlbmError::Config(_))));
    let bad = ToyViTConfig { heads: 3, ..Default::default() };
    assert!(matches!(ToyViT::new(bad), Err(AlbmError::Config(_))));
}

#[test]
fn matching_features_score_one_on_their_row() {
    let space = random_space(3, 4, 6, 2);
    let rows = Array2::from_shape_fn((4, 6), |(j, t)| space.concept(1, j)[t]);
    let s = attribute_scores(&AttributeFeatures::new(rows).unwrap(), &space).unwrap();
    for j in 0..4 {
        assert!((s.scores[[1, j]] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn attribute_scores_match_double_loop() {
    let space = random_space(3, 4, 6, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows: Array2<f64> = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
    for mut r in rows.axis_iter_mut(ndarray::Axis(0)) {
        let n = r.dot(&r).sqrt();
        r /= n;
    }
    let s = attribute_scores(&AttributeFeatures::new(rows.clone()).unwrap(), &space).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            let expected: f64 = (0..6).map(|t| rows[[j, t]] * space.embeddings()[[i, j, t]]).sum();
            assert!((s.scores[[i, j]] - expected).abs() < 1e-12);
        }
    }
    let err = attribute_scores(&AttributeFeatures::new(rows.slice(s![..3, ..]).to_owned()).unwrap(), &space);
    assert!(matches!(err, Err(AlbmError::Dimension { .. })));
}

#[test]
fn orthogonal_features_score_zero() {
    let c = Array::from_shape_fn((2, 2, 4), |(_, _, t)| if t < 2 { 1.0 } else { 0.0 });
    let space = ConceptSpace::assemble(crate::concept_space::tests::table(2, 2), c, Array2::ones((2, 4))).unwrap();
    let rows = array![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let s = attribute_scores(&AttributeFeatures::new(rows).unwrap(), &space).unwrap();
    assert!(s.scores.iter().all(|&x| x == 0.0));
}

#[test]
fn equal_scores_give_log_k() {
    let s = ActivationMatrix::new(Array2::from_elem((5, 3), 0.3));
    assert!((prompt_loss(&s, 2, 0.01).unwrap() - 5f64.ln()).abs() < 1e-12);
}

#[test]
fn saturated_scores_give_tiny_loss() {
    let mut s = Array2::zeros((4, 3));
    s.row_mut(1).fill(100.0);
    assert!(prompt_loss(&ActivationMatrix::new(s), 1, 1.0).unwrap() < 1e-6);
}

#[test]
fn prompt_loss_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s: Array2<f64> = Array::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
    let (y, tau) = (2, 0.3);
    let mut expected = 0.0;
    for j in 0..5 {
        let denom: f64 = (0..4).map(|i| (s[[i, j]] / tau).exp()).sum();
        expected += -((s[[y, j]] / tau).exp() / denom).ln();
    }
    expected /= 5.0;
    let got = prompt_loss(&ActivationMatrix::new(s), y, tau).unwrap();
    assert!((got - expected).abs() < 1e-9);
}

#[test]
fn bad_label_rejected() {
    let s = ActivationMatrix::new(Array2::zeros((2, 2)));
    assert!(matches!(prompt_loss(&s, 2, 1.0), Err(AlbmError::Label { .. })));
}

#[test]
fn training_leaves_backbone_untouched_and_is_seeded() {
    let cfg = PlantedTaskConfig {
        classes: 3,
        attributes: 2,
        samples_per_class: 4,
        vit: micro_config(1),
        ..Default::default()
    };
    let task = PlantedTask::generate(&cfg).unwrap();
    let before = task.vit.checksum();
    let prompts = AttributePrompts::init(2, 8, 3);
    let tcfg = PromptTrainConfig { batch_size: 4, epochs: 2, ..Default::default() };
    let a = train_prompts(&task.images, &task.labels, &task.vit, &task.space, &prompts, &tcfg).unwrap();
    let b = train_prompts(&task.images, &task.labels, &task.vit, &task.space, &prompts, &tcfg).unwrap();
    assert_eq!(task.vit.checksum(), before);
    assert_eq!(a.prompts, b.prompts);
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_ne!(a.prompts.vectors, prompts.vectors);
}

#[test]
fn frozen_prompts_refuse_training() {
    let cfg = PlantedTaskConfig { classes: 2, attributes: 1, samples_per_class: 1, vit: micro_config(1), ..Default::default() };
    let task = PlantedTask::generate(&cfg).unwrap();
    let mut prompts = AttributePrompts::init(1, 8, 0);
    prompts.frozen = true;
    let err = train_prompts(&task.images, &task.labels, &task.vit, &task.space, &prompts, &PromptTrainConfig::default());
    assert!(matches!(err, Err(AlbmError::Argument(_))));
}

#[test]
fn prompt_checkpoint_round_trip() {
    let cfg = micro_config(2);
    let mut p = AttributePrompts::init(3, 8, 4);
    p.vectors.mapv_inplace(|x| x as f32 as f64);
    let bytes = p.to_bytes(&cfg, 4).unwrap();
    assert_eq!(&bytes[..4], b"VAPL");
    let (q, c, seed) = AttributePrompts::from_bytes(&bytes).unwrap();
    assert_eq!((q, c, seed), (p, cfg, 4));
}

#[test]
fn prompt_init_is_small_and_seeded() {
    let a = AttributePrompts::init(12, 64, 7);
    assert_eq!(a, AttributePrompts::init(12, 64, 7));
    let var = a.vectors.mapv(|x| x * x).mean().unwrap();
    assert!((var.sqrt() - PROMPT_INIT_STD).abs() < 0.005);
}

#[test]
fn planted_task_is_learned_in_five_epochs() {
    let task = PlantedTask::generate(&PlantedTaskConfig::default()).unwrap();
    let prompts = AttributePrompts::init(3, 64, 1);
    let before = attribute_accuracy(&task.images, &task.labels, &task.vit, &task.space, &prompts).unwrap();
    let cfg = PromptTrainConfig { batch_size: 8, ..Default::default() };
    let out = train_prompts(&task.images, &task.labels, &task.vit, &task.space, &prompts, &cfg).unwrap();
    let after = attribute_accuracy(&task.images, &task.labels, &task.vit, &task.space, &out.prompts).unwrap();
    assert!(before.iter().any(|&a| a < 0.9), "{before:?}");
    assert!(after.iter().all(|&a| a >= 0.9), "{after:?}");
    assert!(out.loss_trace.last() < out.loss_trace.first());
}
