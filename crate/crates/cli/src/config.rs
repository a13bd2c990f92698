//! TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The top-level `seed` drives everything seeded in a run: training
//! shuffles, few-shot sampling and prompt initialization.

use std::path::{Path, PathBuf};

use albm::classifier::TrainConfig;
use albm::dss::{DssConfig, HttpConfig, PromptSet, RetryPolicy};
use albm::io::SplitRule;
use albm::vapl::synthetic::PlantedTaskConfig;
use albm::vapl::PromptTrainConfig;
use albm::{AlbmError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    /// Where `eval` writes its CSV. Stdout when unset.
    pub report: Option<PathBuf>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub dss: DssSection,
    pub prompts: PromptSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            report: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            dss: DssSection::default(),
            prompts: PromptSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// accs-v1 concept file.
    pub concepts: Option<PathBuf>,
    /// `K * N_a` concept embeddings, class-major.
    pub concept_store: Option<PathBuf>,
    /// `K` class-name embeddings.
    pub name_store: Option<PathBuf>,
    pub train_store: Option<PathBuf>,
    pub test_store: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub rule: SplitRule,
    /// Shots per base class when training for base-to-novel.
    pub base_shots: usize,
    /// Shot counts for the few-shot sweep.
    pub fewshot: Vec<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            rule: SplitRule::HalfHalf,
            base_shots: 16,
            fewshot: vec![1, 2, 4, 8, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Temperature of the zero-shot rules.
    pub zeroshot_tau: f64,
    /// Temperature of trained classifier logits.
    pub tau: f64,
    /// Temperature of the novel-class mixing softmax.
    pub transfer_tau: f64,
    /// Class-local checkpoint. Trained in-process when unset.
    pub checkpoint: Option<PathBuf>,
    /// Class-shared baseline checkpoint. Trained in-process when unset.
    pub shared_checkpoint: Option<PathBuf>,
    /// Retrain the surviving weights after each NEC prune.
    pub nec_refit: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            zeroshot_tau: albm::scoring::CLIP_TEMPERATURE,
            tau: 1.0,
            transfer_tau: 1.0,
            checkpoint: None,
            shared_checkpoint: None,
            nec_refit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DssSection {
    /// Class list, one per line.
    pub classes: Option<PathBuf>,
    /// Existing concept lists; skips the description stage.
    pub concepts: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: String,
    pub model: String,
    pub cache_dir: PathBuf,
    pub parallelism: usize,
    pub min_interval_ms: u64,
    pub retry: RetryPolicy,
    pub http: HttpConfig,
    pub pipeline: DssConfig,
    pub prompts: PromptSet,
}

impl Default for DssSection {
    fn default() -> Self {
        Self {
            classes: None,
            concepts: None,
            out: None,
            mode: "replay".into(),
            model: "gpt-4o".into(),
            cache_dir: PathBuf::from("llm-cache"),
            parallelism: 4,
            min_interval_ms: 0,
            retry: RetryPolicy::default(),
            http: HttpConfig::default(),
            pipeline: DssConfig::default(),
            prompts: PromptSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub task: PlantedTaskConfig,
    pub train: PromptTrainConfig,
    pub out: Option<PathBuf>,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            task: PlantedTaskConfig::default(),
            train: PromptTrainConfig { batch_size: 8, ..Default::default() },
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AlbmError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| AlbmError::Config(vec![format!("{}: {}", path.display(), e.message())]))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.sync_seeds();
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.report);
        fix(&mut self.data.concepts);
        fix(&mut self.data.concept_store);
        fix(&mut self.data.name_store);
        fix(&mut self.data.train_store);
        fix(&mut self.data.test_store);
        fix(&mut self.eval.checkpoint);
        fix(&mut self.eval.shared_checkpoint);
        fix(&mut self.dss.classes);
        fix(&mut self.dss.concepts);
        fix(&mut self.dss.out);
        fix(&mut self.prompts.out);
        if self.dss.cache_dir.is_relative() {
            self.dss.cache_dir = base.join(&self.dss.cache_dir);
        }
    }

    /// Copies the run seed into every seeded block.
    pub fn sync_seeds(&mut self) {
        self.train.seed = self.seed;
        self.prompts.train.seed = self.seed;
        self.prompts.task.seed = self.seed;
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("run config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Every required path that is unset or missing, in one error.
    pub fn require(&self, wanted: &[(&str, &Option<PathBuf>)]) -> Result<Vec<PathBuf>> {
        let mut problems = Vec::new();
        let mut found = Vec::new();
        for (name, path) in wanted {
            match path {
                None => problems.push(format!("{name} is not set")),
                Some(p) if !p.exists() => problems.push(format!("{name} {} does not exist", p.display())),
                Some(p) => found.push(p.clone()),
            }
        }
        if problems.is_empty() {
            Ok(found)
        } else {
            Err(AlbmError::Config(problems))
        }
    }
}
