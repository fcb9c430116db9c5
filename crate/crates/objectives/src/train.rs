use std::sync::Mutex;

use ktl_core::{Direction, FactSet, KtlError, Triple};
use ktl_core::text::Vocabulary;
use ktl_neural::train::mean_loss;
use ktl_neural::{
    derive_seed, Draws, Encoder, EncoderConfig, Linear, NeuralError, Objective, OptimizerConfig, Tape, TrainConfig,
    TrainReport, Var,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ObjectiveError, Result};
use crate::krl::{self, KrlHeads};
use crate::method::{Field, LossKind, Method};
use crate::model::{Heads, KtlModel};
use crate::smlm;

pub const DEFAULT_NEGATIVES: usize = 10;

/// Everything needed to train a model from a fact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub method: Method,
    pub negatives: usize,
    pub min_count: usize,
    pub encoder: EncoderConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
}

impl TrainSpec {
    pub fn new(method: Method) -> Self {
        TrainSpec {
            method,
            negatives: DEFAULT_NEGATIVES,
            min_count: ktl_core::text::vocab::DEFAULT_MIN_COUNT,
            encoder: EncoderConfig::default(),
            optimizer: OptimizerConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: KtlModel,
    pub report: TrainReport,
    /// Triples dropped for exceeding the encoder length limit.
    pub skipped: usize,
}

/// Vocabulary over every field of every triple.
pub fn build_vocab(facts: &FactSet, min_count: usize) -> Vocabulary {
    Vocabulary::build(
        facts
            .iter()
            .flat_map(|t| [t.h.tokens(), t.r.tokens(), t.t.tokens()]),
        min_count,
    )
}

fn uniform_direction<R: Rng>(rng: &mut R) -> Direction {
    Direction::ALL[rng.gen_range(0..3)]
}

/// Token ids of the three fields of one triple.
#[derive(Debug, Clone)]
pub struct EncodedTriple {
    pub triple: Triple,
    pub ids: [Vec<usize>; 3],
}

pub(crate) fn encode_triples(model: &KtlModel, facts: &FactSet, fits: impl Fn(&[Vec<usize>; 3]) -> bool) -> (Vec<EncodedTriple>, usize) {
    let mut kept = Vec::with_capacity(facts.len());
    let mut skipped = 0;
    for t in facts.iter() {
        let ids = [
            model.vocab.encode(t.h.tokens()),
            model.vocab.encode(t.r.tokens()),
            model.vocab.encode(t.t.tokens()),
        ];
        if fits(&ids) {
            kept.push(EncodedTriple { triple: t.clone(), ids });
        } else {
            skipped += 1;
        }
    }
    (kept, skipped)
}

/// KRL loss of one triple in a direction drawn per step.
pub struct KrlObjective<'a> {
    pub model_vocab: &'a Vocabulary,
    pub encoder: &'a Encoder,
    pub heads: &'a KrlHeads,
    pub facts: &'a FactSet,
    pub loss: LossKind,
    pub negatives: usize,
    failure: Mutex<Option<KtlError>>,
}

impl<'a> KrlObjective<'a> {
    pub fn new(model: &'a KtlModel, facts: &'a FactSet, negatives: usize) -> Result<Self> {
        let Heads::Krl(heads) = &model.heads else {
            return Err(ObjectiveError::Checkpoint("KRL objective needs KRL heads".into()));
        };
        let loss = model
            .method
            .loss()
            .ok_or_else(|| ObjectiveError::Checkpoint("method has no KRL loss".into()))?;
        Ok(KrlObjective {
            model_vocab: &model.vocab,
            encoder: &model.encoder,
            heads,
            facts,
            loss,
            negatives,
            failure: Mutex::new(None),
        })
    }

    fn take_failure(&self) -> Option<KtlError> {
        self.failure.lock().ok().and_then(|mut f| f.take())
    }

    fn encode(&self, tape: &mut Tape, ids: &[usize]) -> ktl_neural::Result<Var> {
        let mut input = Vec::with_capacity(ids.len() + 1);
        input.push(ktl_core::text::vocab::CLS_ID);
        input.extend_from_slice(ids);
        let opts = ktl_neural::ForwardOptions {
            truncate: true,
            ..Default::default()
        };
        Ok(self.encoder.forward(tape, &input, opts)?.pooled)
    }

    /// Loss of `example` in a fixed direction.
    pub fn directed_loss(
        &self,
        tape: &mut Tape,
        example: &EncodedTriple,
        direction: Direction,
        rng: &mut impl Rng,
    ) -> ktl_neural::Result<Var> {
        let mut pooled = Vec::with_capacity(3);
        for ids in &example.ids {
            pooled.push(self.encode(tape, ids)?);
        }
        let (generated, target) = krl::krl_forward(tape, self.heads, direction, [pooled[0], pooled[1], pooled[2]]);
        let mut negs = Vec::new();
        if matches!(self.loss, LossKind::Nce(_)) {
            let phrases = self
                .facts
                .sample_negatives_with(&example.triple, direction, self.negatives, rng)
                .map_err(|e| {
                    let msg = e.to_string();
                    if let Ok(mut slot) = self.failure.lock() {
                        slot.get_or_insert(e);
                    }
                    NeuralError::Objective(msg)
                })?;
            let head = self.heads.get(direction);
            for p in phrases {
                let ids = self.model_vocab.encode(p.tokens());
                let v = self.encode(tape, &ids)?;
                negs.push(head.project(tape, v));
            }
        }
        Ok(krl::loss_var(tape, self.loss, generated, target, &negs))
    }
}

impl Objective for KrlObjective<'_> {
    type Example = EncodedTriple;

    fn example_loss(&self, tape: &mut Tape, example: &EncodedTriple, draws: &mut Draws) -> ktl_neural::Result<Var> {
        let direction = uniform_direction(&mut draws.step);
        self.directed_loss(tape, example, direction, &mut draws.example)
    }
}

/// Joint unmasking loss of one triple in a direction drawn per step.
pub struct SmlmObjective<'a> {
    pub encoder: &'a Encoder,
    pub head: &'a Linear,
}

impl<'a> SmlmObjective<'a> {
    pub fn new(model: &'a KtlModel) -> Result<Self> {
        let Heads::Smlm(head) = &model.heads else {
            return Err(ObjectiveError::Checkpoint("SMLM objective needs an unmasking head".into()));
        };
        Ok(SmlmObjective {
            encoder: &model.encoder,
            head,
        })
    }

    pub fn directed_loss(&self, tape: &mut Tape, example: &EncodedTriple, direction: Direction) -> ktl_neural::Result<Var> {
        let ids = [&example.ids[0][..], &example.ids[1][..], &example.ids[2][..]];
        let masked = smlm::smlm_mask(ids, direction, self.encoder.config.max_len)
            .map_err(|e| NeuralError::Objective(e.to_string()))?;
        smlm::smlm_loss_var(tape, self.encoder, self.head, &masked).map_err(|e| match e {
            ObjectiveError::Neural(n) => n,
            other => NeuralError::Objective(other.to_string()),
        })
    }
}

impl Objective for SmlmObjective<'_> {
    type Example = EncodedTriple;

    fn example_loss(&self, tape: &mut Tape, example: &EncodedTriple, draws: &mut Draws) -> ktl_neural::Result<Var> {
        let direction = uniform_direction(&mut draws.step);
        self.directed_loss(tape, example, direction)
    }
}

fn init_model(facts: &FactSet, spec: &TrainSpec) -> Result<KtlModel> {
    if facts.is_empty() {
        return Err(KtlError::Validation("cannot train on an empty fact set".into()).into());
    }
    let vocab = build_vocab(facts, spec.min_count);
    KtlModel::new(spec.method, vocab, spec.encoder.clone(), derive_seed(&[spec.train.seed, 0x1417]))
}

/// Trained model from the KRL objective named by `spec.method`.
pub fn train_krl(facts: &FactSet, spec: &TrainSpec) -> Result<TrainOutcome> {
    let mut model = init_model(facts, spec)?;
    let max = model.max_len();
    let (examples, skipped) = encode_triples(&model, facts, |ids| fits(spec.method, ids, max));
    if examples.is_empty() {
        return Err(ObjectiveError::NothingToTrain { skipped });
    }
    let mut params = std::mem::take(&mut model.params);
    let result = {
        let objective = KrlObjective::new(&model, facts, spec.negatives)?;
        let r = ktl_neural::train(&objective, &mut params, &examples, &spec.optimizer, &spec.train);
        match (r, objective.take_failure()) {
            (Err(_), Some(e)) => Err(ObjectiveError::Core(e)),
            (r, _) => r.map_err(ObjectiveError::from),
        }
    };
    model.params = params;
    Ok(TrainOutcome {
        model,
        report: result?,
        skipped,
    })
}

/// Trained model from the span-masking objective.
pub fn train_smlm(facts: &FactSet, spec: &TrainSpec) -> Result<TrainOutcome> {
    let mut model = init_model(facts, spec)?;
    let max = model.max_len();
    let (examples, skipped) = encode_triples(&model, facts, |ids| fits(spec.method, ids, max));
    if skipped > 0 {
        log::warn!("skipped {skipped} over-length triples");
    }
    if examples.is_empty() {
        return Err(ObjectiveError::NothingToTrain { skipped });
    }
    let mut params = std::mem::take(&mut model.params);
    let result = {
        let objective = SmlmObjective::new(&model)?;
        ktl_neural::train(&objective, &mut params, &examples, &spec.optimizer, &spec.train)
    };
    model.params = params;
    Ok(TrainOutcome {
        model,
        report: result?,
        skipped,
    })
}

pub fn train_model(facts: &FactSet, spec: &TrainSpec) -> Result<TrainOutcome> {
    match spec.method {
        Method::Smlm => train_smlm(facts, spec),
        _ => train_krl(facts, spec),
    }
}

/// Mean loss of the untrained model over `facts`, in nats.
pub fn initial_loss(facts: &FactSet, spec: &TrainSpec) -> Result<f64> {
    let model = init_model(facts, spec)?;
    let (examples, _) = encode_triples(&model, facts, |ids| fits(spec.method, ids, model.max_len()));
    let seed = spec.train.seed;
    let loss = match spec.method {
        Method::Smlm => mean_loss(&SmlmObjective::new(&model)?, &model.params, &examples, seed),
        _ => mean_loss(&KrlObjective::new(&model, facts, spec.negatives)?, &model.params, &examples, seed),
    };
    Ok(loss?)
}

/// Field lengths that make `ids` trainable for `method`.
pub fn fits(method: Method, ids: &[Vec<usize>; 3], max_len: usize) -> bool {
    match method {
        Method::Smlm => 4 + ids.iter().map(Vec::len).sum::<usize>() <= max_len,
        _ => Field::ALL.iter().all(|f| ids[f.index()].len() < max_len),
    }
}
