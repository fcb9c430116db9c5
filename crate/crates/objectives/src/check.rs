//! Finite-difference check of a full training objective on a toy graph.

use ktl_core::{Direction, FactSet, Triple};
use ktl_neural::gradcheck::{self, GradcheckReport};
use ktl_neural::{EncoderConfig, ParamId, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::method::Method;
use crate::model::KtlModel;
use crate::train::{build_vocab, encode_triples, fits, KrlObjective, SmlmObjective};

const TOY_FACTS: [(&str, &str, &str); 8] = [
    ("red fox", "lives in", "forest"),
    ("gray owl", "lives in", "barn"),
    ("green frog", "lives near", "pond"),
    ("brown bear", "sleeps in", "cave"),
    ("red fox", "eats", "mice"),
    ("gray owl", "eats", "voles"),
    ("green frog", "eats", "flies"),
    ("brown bear", "eats", "berries"),
];

/// Negatives per positive in the toy check.
pub const TOY_NEGATIVES: usize = 3;

pub fn toy_facts() -> FactSet {
    TOY_FACTS
        .iter()
        .map(|(h, r, t)| Triple::new(h, r, t).expect("toy triples are valid"))
        .collect()
}

pub fn toy_config() -> EncoderConfig {
    EncoderConfig {
        dim: 8,
        layers: 1,
        heads: 2,
        ff_dim: 16,
        max_len: 16,
        ..Default::default()
    }
}

/// Gradient check of `method` summed over all three directions and two
/// triples of a toy graph. `corrupt` scales the first analytic gradient so
/// the check must fail.
pub fn check_objective(method: Method, seed: u64, step: f64, tolerance: f64, corrupt: bool) -> Result<GradcheckReport> {
    let facts = toy_facts();
    let mut model = KtlModel::new(method, build_vocab(&facts, 1), toy_config(), seed)?;
    let max = model.max_len();
    let (examples, _) = encode_triples(&model, &facts, |ids| fits(method, ids, max));
    let mut params = std::mem::take(&mut model.params);
    let ids: Vec<ParamId> = params.ids().collect();
    let first = ids[0];
    let scale = |id: ParamId, g: &mut [f64]| {
        if id == first {
            g.iter_mut().for_each(|x| *x = *x * 1.5 + 1e-3);
        }
    };
    let perturb: Option<&dyn Fn(ParamId, &mut [f64])> = if corrupt { Some(&scale) } else { None };
    let picked = [&examples[seed as usize % examples.len()], &examples[(seed as usize + 3) % examples.len()]];

    let report = if method == Method::Smlm {
        let objective = SmlmObjective::new(&model)?;
        let loss = |tape: &mut Tape| {
            let parts: Vec<Var> = picked
                .iter()
                .flat_map(|ex| Direction::ALL.map(|d| objective.directed_loss(tape, ex, d).expect("toy triples fit")))
                .collect();
            sum(tape, &parts)
        };
        gradcheck::check(&mut params, &ids, step, tolerance, loss, perturb)
    } else {
        let objective = KrlObjective::new(&model, &facts, TOY_NEGATIVES)?;
        let loss = |tape: &mut Tape| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut parts = Vec::new();
            for ex in picked {
                for d in Direction::ALL {
                    parts.push(objective.directed_loss(tape, ex, d, &mut rng).expect("toy graph has negatives"));
                }
            }
            sum(tape, &parts)
        };
        gradcheck::check(&mut params, &ids, step, tolerance, loss, perturb)
    };
    Ok(report)
}

fn sum(tape: &mut Tape, parts: &[Var]) -> Var {
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = tape.add(acc, p);
    }
    acc
}
