//! Zero-shot multiple-choice answering with triple distances, evaluation,
//! component ablations, few-shot fine-tuning and a planted-knowledge fixture.

pub mod components;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod fixture;
pub mod scoring;

pub use components::Components;
pub use error::{QaError, Result};
pub use eval::{ablate, evaluate, EvalReport, ItemResult, Prediction};
pub use fewshot::{few_shot_finetune, few_shot_splits, FewShotConfig, FewShotSummary};
pub use scoring::{answer, AnswerConfig, AnswerEnv, ItemScores, ModelScorer, OptionScore, RandomScorer, Scorer};
