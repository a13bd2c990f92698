//! Evaluation protocols. Each returns a report with fixed-order rows.

use albm::classifier::{
    evaluate, prune_to_nec, refit_pruned, train_walpha, train_wp_shared, transfer_to_novel, ClassifierKind,
    ConceptClassifier, LabeledActivations, Metrics, Model,
};
use albm::io::{sample_fewshot, split_base_novel};
use albm::{AlbmError, ConceptSpace, Result};

use crate::config::RunConfig;
use crate::data::{self, Dataset, Split};
use crate::report::{Report, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    ZeroshotClip,
    ZeroshotAlbm,
    Albm,
    LbmShared,
    Base2novel,
    Fewshot,
    NecSweep,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::ZeroshotClip => "zeroshot-clip",
            EvalMode::ZeroshotAlbm => "zeroshot-albm",
            EvalMode::Albm => "albm",
            EvalMode::LbmShared => "lbm-shared",
            EvalMode::Base2novel => "base2novel",
            EvalMode::Fewshot => "fewshot",
            EvalMode::NecSweep => "nec-sweep",
        }
    }

    fn needs_training(self, cfg: &RunConfig) -> bool {
        match self {
            EvalMode::ZeroshotClip | EvalMode::ZeroshotAlbm => false,
            EvalMode::Albm => cfg.eval.checkpoint.is_none(),
            EvalMode::LbmShared => cfg.eval.shared_checkpoint.is_none(),
            EvalMode::NecSweep => cfg.eval.checkpoint.is_none() || cfg.eval.nec_refit,
            EvalMode::Base2novel | EvalMode::Fewshot => true,
        }
    }
}

/// Metadata lines shared by every report of a run.
pub fn report_meta(cfg: &RunConfig, mode: &str) -> Vec<(String, String)> {
    vec![
        ("albm".into(), env!("CARGO_PKG_VERSION").into()),
        ("run_id".into(), cfg.run_id.clone()),
        ("mode".into(), mode.into()),
        ("config_sha256".into(), cfg.hash()),
        ("seed".into(), cfg.seed.to_string()),
        ("split_rule".into(), cfg.split.rule.to_string()),
    ]
}

pub fn run(cfg: &RunConfig, mode: EvalMode) -> Result<Report> {
    let data = data::load(cfg, mode.needs_training(cfg))?;
    let mut report = Report {
        meta: report_meta(cfg, mode.name()),
        rows: Vec::new(),
    };
    let row = |mode: String, class_set: &str, m: &Metrics, nec: Option<usize>| Row {
        run_id: cfg.run_id.clone(),
        mode,
        split: "test".into(),
        class_set: class_set.into(),
        top1: m.top1,
        loss: m.mean_loss,
        nec,
        seed: cfg.seed,
    };
    let space = &data.space;
    let test = &data.test;
    let tau = cfg.eval.tau;
    match mode {
        EvalMode::ZeroshotClip | EvalMode::ZeroshotAlbm => {
            let t = cfg.eval.zeroshot_tau;
            let model = if mode == EvalMode::ZeroshotClip {
                Model::ZeroShotClip { tau: t }
            } else {
                Model::ZeroShotAlbm { tau: t }
            };
            let m = evaluate(&model, test.features.view(), &test.labels, space)?;
            report.rows.push(row(mode.name().into(), "all", &m, None));
        }
        EvalMode::Albm => {
            let clf = classifier(cfg, &data, ClassifierKind::Albm)?;
            let m = evaluate(&Model::Albm { weights: clf.weights.view(), tau }, test.features.view(), &test.labels, space)?;
            report.rows.push(row(mode.name().into(), "all", &m, None));
        }
        EvalMode::LbmShared => {
            let clf = classifier(cfg, &data, ClassifierKind::LbmShared)?;
            let model = Model::LbmShared { weights: clf.weights.view(), tau };
            let m = evaluate(&model, test.features.view(), &test.labels, space)?;
            report.rows.push(row(mode.name().into(), "all", &m, None));
        }
        EvalMode::NecSweep => {
            let clf = classifier(cfg, &data, ClassifierKind::Albm)?;
            let train = if cfg.eval.nec_refit {
                let t = train_split(&data)?;
                Some(LabeledActivations::from_features(t.features.view(), &t.labels, space)?)
            } else {
                None
            };
            for nec in 1..=space.num_attributes() {
                let mut pruned = prune_to_nec(&clf, nec)?;
                if let Some(t) = &train {
                    pruned = refit_pruned(&pruned, t, &cfg.train)?.classifier;
                }
                let model = Model::Albm { weights: pruned.weights.view(), tau };
                let m = evaluate(&model, test.features.view(), &test.labels, space)?;
                report.rows.push(row(mode.name().into(), "all", &m, Some(nec)));
            }
        }
        EvalMode::Fewshot => {
            let train = train_split(&data)?;
            for &k in &cfg.split.fewshot {
                let picked = train.select(&sample_fewshot(&train.labels, space.num_classes(), k, cfg.seed)?);
                let clf = fit_albm(cfg, space, &picked)?;
                let model = Model::Albm { weights: clf.weights.view(), tau };
                let m = evaluate(&model, test.features.view(), &test.labels, space)?;
                report.rows.push(row(format!("fewshot-{k}"), "all", &m, None));
            }
        }
        EvalMode::Base2novel => {
            let spec = split_base_novel(space.num_classes(), cfg.split.rule, cfg.split.base_shots, cfg.seed)?;
            let base_space = space.restrict(&spec.base)?;
            let novel_space = space.restrict(&spec.novel)?;
            let base_train = train_split(&data)?.restrict(&spec.base);
            let picked = base_train.select(&sample_fewshot(&base_train.labels, spec.base.len(), spec.shots, spec.seed)?);
            let clf = fit_albm(cfg, &base_space, &picked)?;

            let base_test = test.restrict(&spec.base);
            let model = Model::Albm { weights: clf.weights.view(), tau };
            let m = evaluate(&model, base_test.features.view(), &base_test.labels, &base_space)?;
            report.rows.push(row(mode.name().into(), "base", &m, None));

            let novel_weights = transfer_to_novel(
                &clf,
                base_space.name_embeddings(),
                novel_space.name_embeddings(),
                cfg.eval.transfer_tau,
            )?;
            let novel_test = test.restrict(&spec.novel);
            let model = Model::Albm { weights: novel_weights.view(), tau };
            let m = evaluate(&model, novel_test.features.view(), &novel_test.labels, &novel_space)?;
            report.rows.push(row(mode.name().into(), "novel", &m, None));
        }
    }
    Ok(report)
}

fn train_split(data: &Dataset) -> Result<&Split> {
    data.train
        .as_ref()
        .ok_or_else(|| AlbmError::Config(vec!["data.train_store is required for this mode".into()]))
}

pub fn fit_albm(cfg: &RunConfig, space: &ConceptSpace, split: &Split) -> Result<ConceptClassifier> {
    let acts = LabeledActivations::from_features(split.features.view(), &split.labels, space)?;
    Ok(train_walpha(&acts, space.table().class_names(), &cfg.train)?.classifier)
}

pub fn fit_shared(cfg: &RunConfig, space: &ConceptSpace, split: &Split) -> Result<ConceptClassifier> {
    let flat = space.flat_concepts();
    let names = space.table().class_names();
    Ok(train_wp_shared(split.features.view(), &split.labels, flat.view(), names, &cfg.train)?.classifier)
}

/// The configured checkpoint, checked against the data, or a classifier
/// trained on the train split.
fn classifier(cfg: &RunConfig, data: &Dataset, kind: ClassifierKind) -> Result<ConceptClassifier> {
    let space = &data.space;
    let (key, path) = match kind {
        ClassifierKind::Albm => ("eval.checkpoint", &cfg.eval.checkpoint),
        ClassifierKind::LbmShared => ("eval.shared_checkpoint", &cfg.eval.shared_checkpoint),
    };
    let Some(path) = path else {
        let train = train_split(data)?;
        return match kind {
            ClassifierKind::Albm => fit_albm(cfg, space, train),
            ClassifierKind::LbmShared => fit_shared(cfg, space, train),
        };
    };
    cfg.require(&[(key, &Some(path.clone()))])?;
    let clf = ConceptClassifier::load(path)?;
    let (k, n_a) = (space.num_classes(), space.num_attributes());
    let cols = match kind {
        ClassifierKind::Albm => n_a,
        ClassifierKind::LbmShared => k * n_a,
    };
    let mut problems = Vec::new();
    if clf.kind != kind {
        problems.push(format!("checkpoint {} holds a {:?} classifier, mode needs {kind:?}", path.display(), clf.kind));
    }
    if clf.weights.dim() != (k, cols) {
        let (r, c) = clf.weights.dim();
        problems.push(format!("checkpoint weights are {r} x {c}, data implies {k} x {cols}"));
    }
    if clf.classes != space.table().class_names() {
        problems.push("checkpoint class names differ from the concept file".into());
    }
    if problems.is_empty() {
        Ok(clf)
    } else {
        Err(AlbmError::Config(problems))
    }
}
