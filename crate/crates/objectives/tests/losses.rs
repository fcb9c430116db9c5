use ktl_core::Direction;
use ktl_neural::{Linear, ParamStore, Tape, Tensor};
use ktl_objectives::krl::{
    cosine, krl_distance, krl_forward, l2_loss, loss_var, nce_from_sims, nce_loss, Combiner, DirectionHeads, KrlHeads,
    Projection,
};
use ktl_objectives::{DistanceSemantics, LossKind, SimKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive_nce(sims: &[f64]) -> f64 {
    let denom: f64 = sims.iter().map(|s| s.exp()).sum();
    -(sims[0].exp() / denom).ln()
}

#[test]
fn two_negative_cosine_by_hand() {
    let g = [1.0, 0.0];
    let target = [2.0, 0.0];
    let negs = vec![vec![0.0, 3.0], vec![-1.0, 0.0]];
    let expected = -(1f64.exp() / (1f64.exp() + 0f64.exp() + (-1f64).exp())).ln();
    let got = nce_loss(&g, &target, &negs, SimKind::CosineSim);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn negated_l2_similarity_by_hand() {
    let g = [0.0, 0.0];
    let target = [3.0, 4.0];
    let negs = vec![vec![1.0, 0.0]];
    let expected = -((-5f64).exp() / ((-5f64).exp() + (-1f64).exp())).ln();
    let got = nce_loss(&g, &target, &negs, SimKind::NegL2Sim);
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn nce_is_finite_for_extreme_similarities() {
    for sims in [vec![1e4, -1e4, 0.0], vec![-1e4, 1e4, 1e4], vec![1e4; 11], vec![-1e4; 11]] {
        let l = nce_from_sims(&sims);
        assert!(l.is_finite() && l >= 0.0, "{sims:?} -> {l}");
    }
    assert!((nce_from_sims(&[-1e4, 1e4]) - 2e4).abs() < 1e-6);
}

#[test]
fn nce_on_tape_matches_value_level() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let g = tape.constant(Tensor::row_vector(vec![0.3, -0.2, 0.9]));
    let t = tape.constant(Tensor::row_vector(vec![0.1, 0.4, 0.5]));
    let n1 = tape.constant(Tensor::row_vector(vec![-0.7, 0.2, 0.1]));
    let n2 = tape.constant(Tensor::row_vector(vec![0.0, 1.0, -1.0]));
    for sim in [SimKind::CosineSim, SimKind::NegL2Sim] {
        let v = loss_var(&mut tape, LossKind::Nce(sim), g, t, &[n1, n2]);
        let expected = nce_loss(
            &[0.3, -0.2, 0.9],
            &[0.1, 0.4, 0.5],
            &[vec![-0.7, 0.2, 0.1], vec![0.0, 1.0, -1.0]],
            sim,
        );
        assert!((tape.scalar(v) - expected).abs() < 1e-12);
    }
    let v = loss_var(&mut tape, LossKind::L2, g, t, &[n1]);
    assert!((tape.scalar(v) - l2_loss(&[0.3, -0.2, 0.9], &[0.1, 0.4, 0.5])).abs() < 1e-12);
}

#[test]
fn identity_projections_with_mean_combiner_average_inputs() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let output = Linear::new(&mut store, "out", 3, 3, 0.1, &mut rng);
    let stub = DirectionHeads {
        input1: Projection::Identity,
        input2: Projection::Identity,
        output,
        combine: Combiner::Mean,
    };
    let mut tape = Tape::new(&store);
    let a = tape.constant(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
    let b = tape.constant(Tensor::row_vector(vec![3.0, -2.0, 0.5]));
    let o = stub.generate(&mut tape, a, b);
    assert_eq!(tape.value(o).data, vec![2.0, 0.0, 1.75]);
}

#[test]
fn directions_use_separate_heads() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let heads = KrlHeads::new(&mut store, 4, &mut rng);
    let mut tape = Tape::new(&store);
    let p = [
        tape.constant(Tensor::row_vector(vec![0.5, -0.1, 0.2, 0.9])),
        tape.constant(Tensor::row_vector(vec![-0.3, 0.8, 0.1, 0.0])),
        tape.constant(Tensor::row_vector(vec![0.7, 0.7, -0.4, 0.2])),
    ];
    let (tail, _) = krl_forward(&mut tape, &heads, Direction::GenerateTail, p);
    let (head, _) = krl_forward(&mut tape, &heads, Direction::GenerateHead, p);
    assert_ne!(tape.value(tail).data, tape.value(head).data);
}

#[test]
fn distance_examples() {
    let a = [1.0, 0.0];
    assert_eq!(krl_distance(DistanceSemantics::NceCos, &a, &a), 0.0);
    assert_eq!(krl_distance(DistanceSemantics::NceCos, &a, &[-2.0, 0.0]), 2.0);
    assert_eq!(krl_distance(DistanceSemantics::NceL2, &a, &a), 1.0);
    assert_eq!(krl_distance(DistanceSemantics::L2, &a, &[4.0, 4.0]), 5.0);
    assert_eq!(cosine(&[0.0, 0.0], &a), 0.0);
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #[test]
    fn nce_matches_naive_formula(sims in prop::collection::vec(-3.0f64..3.0, 2..12)) {
        prop_assert!((nce_from_sims(&sims) - naive_nce(&sims)).abs() < 1e-9);
    }

    #[test]
    fn distances_are_non_negative(a in vec_strategy(6), b in vec_strategy(6)) {
        for s in [DistanceSemantics::L2, DistanceSemantics::NceL2, DistanceSemantics::NceCos] {
            prop_assert!(krl_distance(s, &a, &b) >= -1e-12);
        }
    }

    #[test]
    fn nce_is_at_least_zero(g in vec_strategy(4), t in vec_strategy(4), n in prop::collection::vec(vec_strategy(4), 1..6)) {
        for sim in [SimKind::CosineSim, SimKind::NegL2Sim] {
            prop_assert!(nce_loss(&g, &t, &n, sim) >= 0.0);
        }
    }
}
