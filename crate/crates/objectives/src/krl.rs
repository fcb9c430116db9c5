//! Projection-based generation of a missing triple element.
//!
//! Each direction owns two input projections, an output projection and a
//! combiner. The encoder is shared by all three directions.

use ktl_core::Direction;
use ktl_neural::tape::log_sum_exp;
use ktl_neural::{FeedForward, Linear, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::method::{DistanceSemantics, Field, LossKind, SimKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    Identity,
    FeedForward(FeedForward),
}

impl Projection {
    fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Projection::Identity => x,
            Projection::FeedForward(ff) => ff.forward(tape, x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Combiner {
    /// Element-wise mean of the two projected inputs.
    Mean,
    /// Concatenation followed by a two-layer map `2d -> d`.
    FeedForward(FeedForward),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionHeads {
    pub input1: Projection,
    pub input2: Projection,
    pub output: Linear,
    pub combine: Combiner,
}

impl DirectionHeads {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        let std_d = (1.0 / dim as f64).sqrt();
        let std_2d = (1.0 / (2 * dim) as f64).sqrt();
        DirectionHeads {
            input1: Projection::FeedForward(FeedForward::new(store, &format!("{name}.in1"), dim, dim, dim, std_d, rng)),
            input2: Projection::FeedForward(FeedForward::new(store, &format!("{name}.in2"), dim, dim, dim, std_d, rng)),
            output: Linear::new(store, &format!("{name}.out"), dim, dim, std_d, rng),
            combine: Combiner::FeedForward(FeedForward::new(
                store,
                &format!("{name}.combine"),
                2 * dim,
                dim,
                dim,
                std_2d,
                rng,
            )),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for p in [&self.input1, &self.input2] {
            if let Projection::FeedForward(ff) = p {
                ids.extend(ff.ids());
            }
        }
        ids.extend(self.output.ids());
        if let Combiner::FeedForward(ff) = &self.combine {
            ids.extend(ff.ids());
        }
        ids
    }

    /// `Ô = C(M_i1(a), M_i2(b))`
    pub fn generate(&self, tape: &mut Tape, a: Var, b: Var) -> Var {
        let pa = self.input1.forward(tape, a);
        let pb = self.input2.forward(tape, b);
        match &self.combine {
            Combiner::Mean => {
                let s = tape.add(pa, pb);
                tape.scale(s, 0.5)
            }
            Combiner::FeedForward(ff) => {
                let cat = tape.concat_cols(&[pa, pb]);
                ff.forward(tape, cat)
            }
        }
    }

    /// `O_p = M_o(o)`
    pub fn project(&self, tape: &mut Tape, o: Var) -> Var {
        self.output.forward(tape, o)
    }
}

/// One head set per direction, indexed by [`Direction::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrlHeads {
    pub directions: Vec<DirectionHeads>,
}

impl KrlHeads {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, rng: &mut R) -> Self {
        let names = ["krl.head", "krl.relation", "krl.tail"];
        KrlHeads {
            directions: names.iter().map(|n| DirectionHeads::new(store, n, dim, rng)).collect(),
        }
    }

    pub fn get(&self, direction: Direction) -> &DirectionHeads {
        &self.directions[direction.index()]
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.directions.iter().flat_map(DirectionHeads::param_ids).collect()
    }
}

/// Input and output slots of a direction: `(input1, input2, output)`.
pub fn slots(direction: Direction) -> (Field, Field, Field) {
    match direction {
        Direction::GenerateTail => (Field::Head, Field::Relation, Field::Tail),
        Direction::GenerateHead => (Field::Relation, Field::Tail, Field::Head),
        Direction::GenerateRelation => (Field::Head, Field::Tail, Field::Relation),
    }
}

/// Generated and projected target vectors for `direction`, given the pooled
/// encodings of `h`, `r` and `t`.
pub fn krl_forward(tape: &mut Tape, heads: &KrlHeads, direction: Direction, pooled: [Var; 3]) -> (Var, Var) {
    let (a, b, o) = slots(direction);
    let head = heads.get(direction);
    let generated = head.generate(tape, pooled[a.index()], pooled[b.index()]);
    let target = head.project(tape, pooled[o.index()]);
    (generated, target)
}

pub fn sim_var(tape: &mut Tape, kind: SimKind, a: Var, b: Var) -> Var {
    match kind {
        SimKind::CosineSim => tape.cosine(a, b),
        SimKind::NegL2Sim => {
            let d = tape.sub(a, b);
            let n = tape.l2_norm(d);
            tape.scale(n, -1.0)
        }
    }
}

/// Training loss on the tape. `negatives` are projected corruptions and are
/// ignored by the L2 loss.
pub fn loss_var(tape: &mut Tape, kind: LossKind, generated: Var, target: Var, negatives: &[Var]) -> Var {
    match kind {
        LossKind::L2 => {
            let d = tape.sub(generated, target);
            tape.l2_norm(d)
        }
        LossKind::Nce(sim) => {
            let mut sims = Vec::with_capacity(negatives.len() + 1);
            sims.push(sim_var(tape, sim, generated, target));
            for &n in negatives {
                sims.push(sim_var(tape, sim, generated, n));
            }
            let row = tape.concat_cols(&sims);
            tape.nce(row)
        }
    }
}

/// Distance of a generated vector from the projected ground truth.
pub fn distance_var(tape: &mut Tape, semantics: DistanceSemantics, generated: Var, target: Var) -> Var {
    match semantics {
        DistanceSemantics::NceCos => {
            let s = tape.cosine(generated, target);
            let neg = tape.scale(s, -1.0);
            tape.add_const(neg, &Tensor::scalar(1.0))
        }
        DistanceSemantics::NceL2 => {
            let d = tape.sub(generated, target);
            let n = tape.l2_norm(d);
            tape.add_const(n, &Tensor::scalar(1.0))
        }
        DistanceSemantics::L2 | DistanceSemantics::Smlm => {
            let d = tape.sub(generated, target);
            tape.l2_norm(d)
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a - b‖₂`
pub fn l2_loss(generated: &[f64], target: &[f64]) -> f64 {
    assert_eq!(generated.len(), target.len());
    generated
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity, 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

pub fn similarity(kind: SimKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        SimKind::CosineSim => cosine(a, b),
        SimKind::NegL2Sim => -l2_loss(a, b),
    }
}

/// Noise-contrastive loss in nats, computed through log-sum-exp.
pub fn nce_loss(generated: &[f64], target: &[f64], negatives: &[Vec<f64>], sim: SimKind) -> f64 {
    let mut sims = Vec::with_capacity(negatives.len() + 1);
    sims.push(similarity(sim, generated, target));
    sims.extend(negatives.iter().map(|n| similarity(sim, generated, n)));
    nce_from_sims(&sims)
}

/// `logsumexp(sims) - sims[0]`
pub fn nce_from_sims(sims: &[f64]) -> f64 {
    log_sum_exp(sims) - sims[0]
}

pub fn krl_distance(semantics: DistanceSemantics, generated: &[f64], target: &[f64]) -> f64 {
    match semantics {
        DistanceSemantics::NceCos => 1.0 - cosine(generated, target),
        DistanceSemantics::NceL2 => 1.0 + l2_loss(generated, target),
        DistanceSemantics::L2 | DistanceSemantics::Smlm => l2_loss(generated, target),
    }
}
