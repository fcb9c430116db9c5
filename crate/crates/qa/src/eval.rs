use std::collections::BTreeMap;

use ktl_core::QaItem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::Components;
use crate::error::{QaError, Result};
use crate::scoring::{answer, argmin, rank_of, AnswerEnv, ItemScores, OptionScore, Scorer};

pub const TIE_BREAK: &str = "lowest-index";

/// Outcome on one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    /// 1-based position in the input.
    pub item: usize,
    pub chosen: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Ranking score per option; lower is better.
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakdown: Vec<OptionScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub components: String,
    pub accuracy: f64,
    pub correct: usize,
    pub labeled: usize,
    pub total: usize,
    /// Fraction of labeled items whose gold option ranks within the top k.
    pub top_k_accuracy: BTreeMap<String, f64>,
    /// Number of items per option count.
    pub option_histogram: BTreeMap<String, usize>,
    pub tie_break: String,
    pub seed: u64,
    pub warnings: usize,
    pub items: Vec<ItemResult>,
}

impl EvalReport {
    /// Builds a report from per-option ranking scores (lower is better).
    pub fn from_scores(
        scorer: &str,
        components: &str,
        seed: u64,
        items: &[QaItem],
        scores: Vec<Vec<f64>>,
        breakdowns: Vec<Vec<OptionScore>>,
        warnings: usize,
    ) -> Result<Self> {
        let mut results = Vec::with_capacity(items.len());
        let mut correct = 0;
        let mut labeled = 0;
        let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
        let max_options = items.iter().map(|i| i.options.len()).max().unwrap_or(0);
        let mut top_hits = vec![0usize; max_options.max(1)];
        for (i, ((item, s), breakdown)) in items.iter().zip(scores).zip(breakdowns).enumerate() {
            *histogram.entry(item.options.len()).or_default() += 1;
            let chosen = argmin(&s);
            let ok = item.label.map(|l| l == chosen);
            if let Some(l) = item.label {
                labeled += 1;
                correct += usize::from(l == chosen);
                let rank = rank_of(&s, l);
                for hit in top_hits.iter_mut().skip(rank) {
                    *hit += 1;
                }
            }
            results.push(ItemResult {
                item: i + 1,
                chosen,
                label: item.label,
                correct: ok,
                scores: s,
                breakdown,
            });
        }
        if labeled == 0 {
            return Err(QaError::NoLabeledItems);
        }
        let top_k_accuracy = top_hits
            .iter()
            .enumerate()
            .map(|(k, &h)| ((k + 1).to_string(), h as f64 / labeled as f64))
            .collect();
        Ok(EvalReport {
            scorer: scorer.to_string(),
            components: components.to_string(),
            accuracy: correct as f64 / labeled as f64,
            correct,
            labeled,
            total: items.len(),
            top_k_accuracy,
            option_histogram: histogram.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            tie_break: TIE_BREAK.to_string(),
            seed,
            warnings,
            items: results,
        })
    }
}

/// Scores every item in parallel; output order follows input order.
pub fn score_items(scorer: &dyn Scorer, items: &[QaItem], env: &AnswerEnv) -> Result<Vec<ItemScores>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, item)| answer(scorer, i, item, env))
        .collect()
}

fn report_for(
    scorer: &dyn Scorer,
    items: &[QaItem],
    scored: &[ItemScores],
    components: Components,
    seed: u64,
) -> Result<EvalReport> {
    let scores = scored.iter().map(|s| s.scores(components)).collect();
    let breakdowns = scored.iter().map(|s| s.options.clone()).collect();
    let warnings = scored.iter().map(|s| s.warnings.len()).sum();
    EvalReport::from_scores(scorer.name(), &components.key(), seed, items, scores, breakdowns, warnings)
}

/// Accuracy of `scorer` under the full product.
pub fn evaluate(scorer: &dyn Scorer, items: &[QaItem], env: &AnswerEnv, seed: u64) -> Result<(EvalReport, Vec<ItemScores>)> {
    if !items.iter().any(|i| i.label.is_some()) {
        return Err(QaError::NoLabeledItems);
    }
    let scored = score_items(scorer, items, env)?;
    let report = report_for(scorer, items, &scored, Components::ALL, seed)?;
    Ok((report, scored))
}

/// One report per component subset, keyed by [`Components::key`].
pub fn ablate(
    scorer: &dyn Scorer,
    items: &[QaItem],
    env: &AnswerEnv,
    configurations: &[Components],
    seed: u64,
) -> Result<BTreeMap<String, EvalReport>> {
    if configurations.is_empty() || configurations.iter().any(Components::is_empty) {
        return Err(QaError::EmptyComponents);
    }
    if !items.iter().any(|i| i.label.is_some()) {
        return Err(QaError::NoLabeledItems);
    }
    let scored = score_items(scorer, items, env)?;
    configurations
        .iter()
        .map(|&c| Ok((c.key(), report_for(scorer, items, &scored, c, seed)?)))
        .collect()
}

/// Predictions JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item: usize,
    pub chosen: usize,
    pub scores: Vec<OptionScore>,
}

pub fn predictions(scored: &[ItemScores]) -> Vec<Prediction> {
    scored
        .iter()
        .enumerate()
        .map(|(i, s)| Prediction {
            item: i + 1,
            chosen: s.chosen,
            scores: s.options.clone(),
        })
        .collect()
}
