//! Few-shot fine-tuning: a shared feed-forward scorer over the `[cls]`
//! encoding of `[cls] context [sep] question [sep] option [sep]`, trained
//! with cross-entropy over the options of each item.

use ktl_core::text::vocab::{CLS_ID, SEP_ID};
use ktl_core::QaItem;
use ktl_neural::{
    derive_seed, train, Draws, FeedForward, ForwardOptions, Objective, OptimizerConfig, ParamStore, Tape, TrainConfig,
    Var,
};
use ktl_objectives::KtlModel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::eval::EvalReport;

pub const DEFAULT_FRACTION: f64 = 0.08;

/// Sequence summary fed to the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Output at the `[cls]` position.
    Cls,
    /// Mean of all output positions.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FewShotConfig {
    pub fraction: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init_std: f64,
    pub pooling: Pooling,
    /// One split per seed.
    pub seeds: Vec<u64>,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            fraction: DEFAULT_FRACTION,
            hidden: 64,
            epochs: 20,
            batch_size: 1,
            learning_rate: 1e-4,
            init_std: 0.1,
            pooling: Pooling::Mean,
            seeds: vec![0, 1, 2],
        }
    }
}

/// Indices of `⌊fraction · n⌋` items, drawn without replacement.
pub fn sample_split(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(QaError::Fraction(fraction));
    }
    let take = (fraction * n as f64).floor() as usize;
    if take == 0 {
        return Err(QaError::Fixture(format!("fraction {fraction} of {n} items selects nothing")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if take < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(take);
        idx.sort_unstable();
    }
    Ok(idx)
}

/// Input ids for one option.
pub fn option_input(model: &KtlModel, item: &QaItem, option: &str) -> Vec<usize> {
    let mut ids = vec![CLS_ID];
    if let Some(c) = item.context_text() {
        ids.extend(model.token_ids(c));
    }
    ids.push(SEP_ID);
    ids.extend(model.token_ids(&item.question));
    ids.push(SEP_ID);
    ids.extend(model.token_ids(option));
    ids.push(SEP_ID);
    ids
}

struct Classifier<'a> {
    model: &'a KtlModel,
    scorer: FeedForward,
    pooling: Pooling,
}

impl Classifier<'_> {
    fn logits(&self, tape: &mut Tape, inputs: &[Vec<usize>]) -> ktl_neural::Result<Var> {
        let opts = || ForwardOptions {
            truncate: true,
            ..Default::default()
        };
        let mut cols = Vec::with_capacity(inputs.len());
        for ids in inputs {
            let enc = self.model.encoder.forward(tape, ids, opts())?;
            let pooled = match self.pooling {
                Pooling::Cls => enc.pooled,
                Pooling::Mean => tape.mean_rows(enc.per_token),
            };
            cols.push(self.scorer.forward(tape, pooled));
        }
        Ok(tape.concat_cols(&cols))
    }
}

struct Example {
    inputs: Vec<Vec<usize>>,
    label: usize,
}

impl Objective for Classifier<'_> {
    type Example = Example;

    fn example_loss(&self, tape: &mut Tape, ex: &Example, _: &mut Draws) -> ktl_neural::Result<Var> {
        let logits = self.logits(tape, &ex.inputs)?;
        Ok(tape.cross_entropy(logits, &[ex.label]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotRun {
    pub seed: u64,
    pub train_items: Vec<usize>,
    pub epoch_losses: Vec<f64>,
    pub report: EvalReport,
}

/// Fine-tunes the encoder of `model` plus a fresh scorer on a seeded
/// fraction of `train_items`, then evaluates on `dev`.
pub fn few_shot_finetune(
    model: &KtlModel,
    train_items: &[QaItem],
    dev: &[QaItem],
    config: &FewShotConfig,
    seed: u64,
) -> Result<FewShotRun> {
    let labeled: Vec<&QaItem> = train_items.iter().filter(|i| i.label.is_some()).collect();
    let split = sample_split(labeled.len(), config.fraction, seed)?;
    let examples: Vec<Example> = split
        .iter()
        .map(|&i| {
            let item = labeled[i];
            Example {
                inputs: item.options.iter().map(|o| option_input(model, item, o)).collect(),
                label: item.label.unwrap_or(0),
            }
        })
        .collect();

    let mut params: ParamStore = model.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xf5]));
    let d = model.encoder.config.dim;
    let scorer = FeedForward::new(&mut params, "fewshot.scorer", d, config.hidden, 1, config.init_std, &mut rng);
    let mut tuned = model.clone();
    tuned.params = ParamStore::new();
    let classifier = Classifier {
        model: &tuned,
        scorer,
        pooling: config.pooling,
    };
    let optimizer = OptimizerConfig {
        learning_rate: config.learning_rate,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed,
        shuffle: true,
    };
    let report = train(&classifier, &mut params, &examples, &optimizer, &train_cfg)?;

    let scores: Vec<Vec<f64>> = dev
        .par_iter()
        .map(|item| {
            let inputs: Vec<Vec<usize>> = item.options.iter().map(|o| option_input(model, item, o)).collect();
            let mut tape = Tape::new(&params);
            let logits = classifier.logits(&mut tape, &inputs)?;
            let row = tape.value(logits).data.clone();
            let lse = ktl_neural::tape::log_sum_exp(&row);
            Ok(row.iter().map(|l| lse - l).collect())
        })
        .collect::<Result<_>>()?;
    let eval = EvalReport::from_scores(
        "few-shot",
        "classifier",
        seed,
        dev,
        scores,
        vec![Vec::new(); dev.len()],
        0,
    )?;
    Ok(FewShotRun {
        seed,
        train_items: split,
        epoch_losses: report.epoch_losses,
        report: eval,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSummary {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single split.
    pub std_dev: f64,
    pub runs: Vec<FewShotRun>,
}

/// One run per configured seed, with mean and deviation of dev accuracy.
pub fn few_shot_splits(model: &KtlModel, train_items: &[QaItem], dev: &[QaItem], config: &FewShotConfig) -> Result<FewShotSummary> {
    let runs = config
        .seeds
        .iter()
        .map(|&s| few_shot_finetune(model, train_items, dev, config, s))
        .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|r| r.report.accuracy).collect();
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std_dev = if accuracies.len() > 1 {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(FewShotSummary {
        accuracies,
        mean,
        std_dev,
        runs,
    })
}

/// Same architecture and vocabulary as `model`, freshly initialized.
pub fn fresh_like(model: &KtlModel, seed: u64) -> Result<KtlModel> {
    Ok(KtlModel::new(model.method, model.vocab.clone(), model.encoder.config.clone(), seed)?)
}
