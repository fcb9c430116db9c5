//! Mini-batch training loop shared by all objectives.
//!
//! Each example builds its own tape, so per-example gradients are computed in
//! parallel and then summed in example order. Results are bit-identical for a
//! given seed regardless of thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::optim::{Adam, OptimizerConfig};
use crate::params::{Gradients, ParamStore};
use crate::tape::{Tape, Var};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "KTL_THREADS";

/// Random streams handed to an objective for one example.
pub struct Draws {
    /// Shared by every example of the current optimizer step.
    pub step: ChaCha8Rng,
    /// Private to this example.
    pub example: ChaCha8Rng,
}

impl Draws {
    pub fn new(step_seed: u64, example_seed: u64) -> Self {
        Draws {
            step: ChaCha8Rng::seed_from_u64(step_seed),
            example: ChaCha8Rng::seed_from_u64(example_seed),
        }
    }
}

/// A differentiable per-example loss.
pub trait Objective: Sync {
    type Example: Sync;

    /// Records the loss of `example` on `tape` and returns the scalar node.
    fn example_loss(&self, tape: &mut Tape, example: &Self::Example, draws: &mut Draws) -> Result<Var>;
}

const STEP_TAG: u64 = 0x5354_4550;
const EVAL_TAG: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub examples: usize,
}

/// Stable 64-bit mix of several words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Thread pool honouring [`THREADS_ENV`]; rayon's default otherwise.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| NeuralError::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        if n > 0 {
            b = b.num_threads(n);
        }
    }
    b.build().map_err(|e| NeuralError::Config(e.to_string()))
}

/// Loss and gradients of one example.
pub fn example_gradients<O: Objective>(
    objective: &O,
    store: &ParamStore,
    example: &O::Example,
    draws: &mut Draws,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(store);
    let loss = objective.example_loss(&mut tape, example, draws)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(NeuralError::NonFiniteLoss(value));
    }
    Ok((value, tape.backward(loss)))
}

/// Mean loss over `examples` without updating anything.
pub fn mean_loss<O: Objective>(objective: &O, store: &ParamStore, examples: &[O::Example], seed: u64) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<f64> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut draws = Draws::new(derive_seed(&[seed, EVAL_TAG, STEP_TAG]), derive_seed(&[seed, EVAL_TAG, i as u64]));
            let mut tape = Tape::new(store);
            let loss = objective.example_loss(&mut tape, ex, &mut draws)?;
            Ok(tape.scalar(loss))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Runs `cfg.epochs` passes of Adam over `examples`.
pub fn train<O: Objective>(
    objective: &O,
    store: &mut ParamStore,
    examples: &[O::Example],
    optimizer: &OptimizerConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if cfg.batch_size == 0 {
        return Err(NeuralError::Config("batch_size must be positive".into()));
    }
    let batches_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let mut adam = Adam::new(optimizer.clone(), store, batches_per_epoch * cfg.epochs)?;
    let pool = thread_pool()?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        steps: 0,
        examples: examples.len(),
    };
    let mut last_finite = None;

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, epoch as u64]));
            order.sort_unstable();
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let frozen: &ParamStore = store;
            let step_seed = derive_seed(&[cfg.seed, epoch as u64, b as u64, STEP_TAG]);
            let results: Vec<Result<(f64, Gradients)>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let mut draws = Draws::new(step_seed, derive_seed(&[cfg.seed, epoch as u64, i as u64]));
                        example_gradients(objective, frozen, &examples[i], &mut draws)
                    })
                    .collect()
            });
            let mut grads = Gradients::empty(store.len());
            let mut batch_loss = 0.0;
            for r in results {
                match r {
                    Ok((l, g)) => {
                        batch_loss += l;
                        grads.merge(g);
                    }
                    Err(NeuralError::NonFiniteLoss(_)) => {
                        return Err(NeuralError::Divergence {
                            epoch,
                            step: report.steps,
                            last_finite,
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            if !grads.all_finite() {
                return Err(NeuralError::Divergence {
                    epoch,
                    step: report.steps,
                    last_finite,
                });
            }
            adam.step(store, &mut grads);
            report.steps += 1;
            if !store.all_finite() {
                return Err(NeuralError::Divergence {
                    epoch,
                    step: report.steps,
                    last_finite,
                });
            }
            last_finite = Some(batch_loss / n);
            epoch_loss += batch_loss;
            log::debug!("epoch {epoch} batch {b} loss {:.6}", batch_loss / n);
        }
        let mean = if examples.is_empty() { 0.0 } else { epoch_loss / examples.len() as f64 };
        log::info!("epoch {} mean loss {:.6}", epoch + 1, mean);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}
