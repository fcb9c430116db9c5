use std::fs;
use std::path::{Path, PathBuf};

use ktl_core::graph::{SampleConfig, DEFAULT_CAP};
use ktl_core::text::Lexicon;
use ktl_core::text::vocab::DEFAULT_MIN_COUNT;
use ktl_neural::{EncoderConfig, OptimizerConfig, TrainConfig};
use ktl_objectives::train::DEFAULT_NEGATIVES;
use ktl_objectives::{Method, TrainSpec};
use ktl_qa::AnswerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Full run configuration. Every field has a default; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tokenizer: TokenizerConfig,
    pub encoder: EncoderConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerSection,
    pub sampling: SamplingConfig,
    pub evaluation: AnswerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tokenizer: TokenizerConfig::default(),
            encoder: EncoderConfig::default(),
            objective: ObjectiveConfig::default(),
            optimizer: OptimizerSection::default(),
            sampling: SamplingConfig::default(),
            evaluation: AnswerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Minimum token count to enter the vocabulary.
    pub min_count: usize,
    /// Replacement stopword list, one entry per line.
    pub stopwords: Option<PathBuf>,
    /// Replacement verb lemma list.
    pub verbs: Option<PathBuf>,
    /// Replacement wh-word rewrite rules.
    pub wh_rules: Option<PathBuf>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            min_count: DEFAULT_MIN_COUNT,
            stopwords: None,
            verbs: None,
            wh_rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub method: Method,
    /// Negatives per positive for the contrastive losses.
    pub k: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            method: Method::Smlm,
            k: DEFAULT_NEGATIVES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub clip_norm: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        let t = TrainConfig::default();
        OptimizerSection {
            learning_rate: o.learning_rate,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
            warmup_fraction: o.warmup_fraction,
            clip_norm: o.clip_norm,
            epochs: t.epochs,
            batch_size: t.batch_size,
            shuffle: t.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub cap: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { cap: DEFAULT_CAP, seed: 0 }
    }
}

impl RunConfig {
    /// Reads `path`, or the defaults when absent.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        let t = &self.tokenizer;
        for p in [&t.stopwords, &t.verbs, &t.wh_rules].into_iter().flatten() {
            require(p)?;
        }
        Ok(Lexicon::with_overrides(
            t.stopwords.as_deref(),
            t.verbs.as_deref(),
            t.wh_rules.as_deref(),
        )?)
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            cap: self.sampling.cap,
            seed: self.sampling.seed,
        }
    }

    pub fn train_spec(&self, seed: u64) -> TrainSpec {
        let o = &self.optimizer;
        TrainSpec {
            method: self.objective.method,
            negatives: self.objective.k,
            min_count: self.tokenizer.min_count,
            encoder: self.encoder.clone(),
            optimizer: OptimizerConfig {
                learning_rate: o.learning_rate,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
                warmup_fraction: o.warmup_fraction,
                clip_norm: o.clip_norm,
            },
            train: TrainConfig {
                epochs: o.epochs,
                batch_size: o.batch_size,
                seed,
                shuffle: o.shuffle,
            },
        }
    }

    /// Training recipe tuned for the planted fixture.
    pub fn fixture_recipe() -> Self {
        let mut c = RunConfig::default();
        c.optimizer.learning_rate = 1e-3;
        c.optimizer.batch_size = 1;
        c.optimizer.epochs = 3;
        c.optimizer.warmup_fraction = 0.1;
        c
    }
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
