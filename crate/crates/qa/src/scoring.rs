//! Option scoring: the product of the three directional distances, averaged
//! over contexts, minimized over options.

use ktl_core::retrieval::{ir_solver_answer, InvertedIndex};
use ktl_core::text::{question_to_hypothesis, Lexicon};
use ktl_core::QaItem;
use ktl_neural::derive_seed;
use ktl_objectives::KtlModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::components::Components;
use crate::error::{QaError, Result};

/// Distances of one `(context, question, option)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionScore {
    pub d_h: f64,
    pub d_r: f64,
    pub d_t: f64,
    pub product: f64,
}

impl OptionScore {
    pub fn new(d_h: f64, d_r: f64, d_t: f64) -> Self {
        OptionScore {
            d_h,
            d_r,
            d_t,
            product: d_h * d_r * d_t,
        }
    }

    /// Product of the selected components only.
    pub fn restricted(&self, components: Components) -> f64 {
        let mut p = 1.0;
        if components.answer {
            p *= self.d_t;
        }
        if components.question {
            p *= self.d_r;
        }
        if components.context {
            p *= self.d_h;
        }
        p
    }
}

/// One triple to score, with its position for scorers that need it.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub item: usize,
    pub option: usize,
    pub context: &'a str,
    pub question: &'a str,
    pub answer: &'a str,
}

pub trait Scorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, request: &ScoreRequest) -> Result<OptionScore>;
}

/// Distances from a trained model.
pub struct ModelScorer<'a> {
    pub model: &'a KtlModel,
}

impl Scorer for ModelScorer<'_> {
    fn name(&self) -> &str {
        self.model.method.name()
    }

    fn score(&self, req: &ScoreRequest) -> Result<OptionScore> {
        let [d_h, d_r, d_t] = self.model.distances(req.context, req.question, req.answer)?;
        Ok(OptionScore::new(d_h, d_r, d_t))
    }
}

/// Uniform random `d_t` seeded by item and option; `d_h = d_r = 1`.
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn score(&self, req: &ScoreRequest) -> Result<OptionScore> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, req.item as u64, req.option as u64]));
        Ok(OptionScore::new(1.0, 1.0, rng.gen::<f64>()))
    }
}

/// Zero distance on the gold option, one elsewhere.
pub struct OracleScorer {
    pub labels: Vec<Option<usize>>,
}

impl Scorer for OracleScorer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&self, req: &ScoreRequest) -> Result<OptionScore> {
        let gold = self.labels.get(req.item).copied().flatten();
        let d_t = if gold == Some(req.option) { 0.0 } else { 1.0 };
        Ok(OptionScore::new(1.0, 1.0, d_t))
    }
}

/// Lexical retrieval baseline: `d_t = 1 / (1 + confidence)`.
pub struct IrScorer<'a> {
    pub index: &'a InvertedIndex,
    pub lexicon: &'a Lexicon,
    pub top_k: usize,
}

impl Scorer for IrScorer<'_> {
    fn name(&self) -> &str {
        "ir"
    }

    fn score(&self, req: &ScoreRequest) -> Result<OptionScore> {
        let context = (!req.context.trim().is_empty()).then_some(req.context);
        let options = [req.answer.to_string()];
        let ans = ir_solver_answer(self.index, context, req.question, &options, self.lexicon, self.top_k);
        Ok(OptionScore::new(1.0, 1.0, 1.0 / (1.0 + ans.confidences[0])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnswerConfig {
    /// Rewrite each question and option into a statement used as `r`.
    pub hypothesis: bool,
    /// Contexts retrieved per option when an item has none.
    pub top_k: usize,
}

impl Default for AnswerConfig {
    fn default() -> Self {
        AnswerConfig {
            hypothesis: false,
            top_k: ktl_core::retrieval::DEFAULT_TOP_K,
        }
    }
}

/// Shared resources for answering.
pub struct AnswerEnv<'a> {
    pub index: Option<&'a InvertedIndex>,
    pub lexicon: &'a Lexicon,
    pub config: &'a AnswerConfig,
}

/// Scores of every option of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemScores {
    pub chosen: usize,
    /// Per option: component means over contexts, `product` the mean product.
    pub options: Vec<OptionScore>,
    /// Per option, one score per context used.
    pub per_context: Vec<Vec<OptionScore>>,
    pub warnings: Vec<String>,
}

impl ItemScores {
    /// Ranking score per option under `components`.
    pub fn scores(&self, components: Components) -> Vec<f64> {
        self.per_context
            .iter()
            .map(|ctx| ctx.iter().map(|s| s.restricted(components)).sum::<f64>() / ctx.len() as f64)
            .collect()
    }
}

/// Index of the smallest score; ties and NaN resolve to the lowest index.
pub fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

/// 0-based rank of `target` under ascending score, ties counted against it.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &x)| x < s || (x == s && i < target))
        .count()
}

fn mean_score(scores: &[OptionScore]) -> OptionScore {
    if scores.len() == 1 {
        return scores[0];
    }
    let n = scores.len() as f64;
    let m = |f: fn(&OptionScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    OptionScore {
        d_h: m(|s| s.d_h),
        d_r: m(|s| s.d_r),
        d_t: m(|s| s.d_t),
        product: m(|s| s.product),
    }
}

/// Scores every option of `item` and picks the minimum.
pub fn answer(scorer: &dyn Scorer, item_index: usize, item: &QaItem, env: &AnswerEnv) -> Result<ItemScores> {
    item.validate()?;
    let mut warnings = Vec::new();
    let mut per_context = Vec::with_capacity(item.options.len());
    for (o, option) in item.options.iter().enumerate() {
        let contexts: Vec<String> = match (item.context_text(), env.index) {
            (Some(c), _) => vec![c.to_string()],
            (None, Some(index)) => {
                let hits: Vec<String> = index
                    .retrieve(&format!("{} {}", item.question, option), env.config.top_k)
                    .into_iter()
                    .map(|h| h.text.to_string())
                    .collect();
                if hits.is_empty() {
                    warnings.push(format!("option {o}: retrieval found no context"));
                    vec![String::new()]
                } else {
                    hits
                }
            }
            (None, None) => {
                if o == 0 {
                    warnings.push("no context and no retrieval index; scored with empty context".into());
                }
                vec![String::new()]
            }
        };
        let question = if env.config.hypothesis {
            question_to_hypothesis(&item.question, option, env.lexicon)
        } else {
            item.question.clone()
        };
        let scores = contexts
            .iter()
            .map(|ctx| {
                let req = ScoreRequest {
                    item: item_index,
                    option: o,
                    context: ctx,
                    question: &question,
                    answer: option,
                };
                scorer.score(&req).map_err(|e| QaError::Scoring {
                    item: item_index,
                    option: o,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        per_context.push(scores);
    }
    let options: Vec<OptionScore> = per_context.iter().map(|s| mean_score(s)).collect();
    let finals: Vec<f64> = options.iter().map(|s| s.product).collect();
    Ok(ItemScores {
        chosen: argmin(&finals),
        options,
        per_context,
        warnings,
    })
}
