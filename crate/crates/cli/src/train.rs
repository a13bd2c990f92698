//! Training drivers. Each writes a checkpoint and returns a short summary.

use std::fmt::Write as _;
use std::path::PathBuf;

use albm::classifier::{activation_accuracy, LabeledActivations};
use albm::io::sample_fewshot;
use albm::vapl::synthetic::{PlantedTask, PlantedTaskConfig};
use albm::vapl::{attribute_accuracy, train_prompts, AttributePrompts};
use albm::{AlbmError, Result};

use crate::config::RunConfig;
use crate::data;
use crate::eval::{fit_albm, fit_shared};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainTarget {
    /// Class-local attribute weights.
    Walpha,
    /// Class-shared baseline weights.
    WpShared,
    /// Visual attribute prompts on the planted toy task.
    Prompts,
}

fn output(path: Option<&PathBuf>, key: &str) -> Result<PathBuf> {
    path.cloned()
        .ok_or_else(|| AlbmError::Config(vec![format!("no output path: pass --out or set {key}")]))
}

pub fn run(cfg: &RunConfig, target: TrainTarget, shots: Option<usize>) -> Result<String> {
    match target {
        TrainTarget::Walpha | TrainTarget::WpShared => train_classifier(cfg, target, shots),
        TrainTarget::Prompts => train_vapl(cfg),
    }
}

fn train_classifier(cfg: &RunConfig, target: TrainTarget, shots: Option<usize>) -> Result<String> {
    let out = match target {
        TrainTarget::Walpha => output(cfg.eval.checkpoint.as_ref(), "eval.checkpoint")?,
        _ => output(cfg.eval.shared_checkpoint.as_ref(), "eval.shared_checkpoint")?,
    };
    let data = data::load(cfg, true)?;
    let space = &data.space;
    let mut train = data.train.expect("loaded with train split");
    if let Some(k) = shots {
        train = train.select(&sample_fewshot(&train.labels, space.num_classes(), k, cfg.seed)?);
    }
    let clf = match target {
        TrainTarget::Walpha => fit_albm(cfg, space, &train)?,
        _ => fit_shared(cfg, space, &train)?,
    };
    clf.save(&out)?;
    let mut s = format!(
        "trained {:?} classifier ({} x {}) on {} samples for {} epochs\n",
        clf.kind,
        clf.weights.nrows(),
        clf.weights.ncols(),
        train.len(),
        clf.epochs_trained
    );
    if target == TrainTarget::Walpha {
        let acts = LabeledActivations::from_features(train.features.view(), &train.labels, space)?;
        let acc = activation_accuracy(clf.weights.view(), &acts)?;
        writeln!(s, "train top1 {:.2}%", 100.0 * acc).unwrap();
    }
    writeln!(s, "wrote {}", out.display()).unwrap();
    Ok(s)
}

fn train_vapl(cfg: &RunConfig) -> Result<String> {
    let out = output(cfg.prompts.out.as_ref(), "prompts.out")?;
    let task_cfg: &PlantedTaskConfig = &cfg.prompts.task;
    let task = PlantedTask::generate(task_cfg)?;
    let n_a = task.space.num_attributes();
    // Offset so prompt init and task generation never share a stream.
    let init = AttributePrompts::init(n_a, task.vit.config.embed_dim, cfg.seed.wrapping_add(1));
    let before = attribute_accuracy(&task.images, &task.labels, &task.vit, &task.space, &init)?;
    let trained = train_prompts(&task.images, &task.labels, &task.vit, &task.space, &init, &cfg.prompts.train)?;
    let after = attribute_accuracy(&task.images, &task.labels, &task.vit, &task.space, &trained.prompts)?;
    trained.prompts.save(&out, &task.vit.config, task_cfg.seed)?;

    let fmt = |v: &[f64]| v.iter().map(|a| format!("{:.3}", a)).collect::<Vec<_>>().join(" ");
    let mut s = format!(
        "planted task: {} classes, {} attributes, {} images; backbone {}\n",
        task_cfg.classes,
        n_a,
        task.images.len(),
        task.vit.checksum()
    );
    writeln!(s, "attribute accuracy before: {}", fmt(&before)).unwrap();
    writeln!(s, "attribute accuracy after:  {}", fmt(&after)).unwrap();
    writeln!(
        s,
        "loss {:.4} -> {:.4} over {} epochs",
        trained.loss_trace[0],
        trained.loss_trace.last().unwrap(),
        cfg.prompts.train.epochs
    )
    .unwrap();
    writeln!(s, "wrote {}", out.display()).unwrap();
    Ok(s)
}
