mod common;

use basconv::graph::UbiGraph;
use basconv::kernels::{Activation, RngStream};
use basconv::model::{forward, LayerParams, ModelParams, Precedence};
use common::{max_diff, per_node_forward, random_graph, random_matrix};
use proptest::prelude::*;

fn random_params(
    g: &UbiGraph,
    d: usize,
    layers: usize,
    activation: Activation,
    precedence: Precedence,
    bias: bool,
    rng: &mut RngStream,
) -> ModelParams {
    ModelParams {
        user_emb: random_matrix(g.n_users(), d, 1.0, rng),
        item_emb: random_matrix(g.n_items(), d, 1.0, rng),
        layers: (0..layers)
            .map(|_| LayerParams {
                w_sp: random_matrix(d, d, 0.8, rng),
                w_ub: random_matrix(d, d, 0.8, rng),
                w_ui: random_matrix(d, d, 0.8, rng),
                w_ib: random_matrix(d, d, 0.8, rng),
                bias: bias.then(|| random_matrix(1, d, 0.5, rng)),
            })
            .collect(),
        activation,
        precedence,
    }
}

fn worst_gap(g: &UbiGraph, p: &ModelParams) -> f64 {
    let fast = forward(g, p).unwrap();
    let (users, baskets, items) = per_node_forward(g, p);
    let mut worst: f64 = 0.0;
    for l in 0..=p.layers.len() {
        worst = worst
            .max(max_diff(&fast.users[l], &users[l]))
            .max(max_diff(&fast.baskets[l], &baskets[l]))
            .max(max_diff(&fast.items[l], &items[l]));
    }
    worst
}

#[test]
fn matrix_form_matches_per_node_updates() {
    let mut rng = RngStream::new(2024);
    for case in 0..20 {
        let g = random_graph(&mut rng, 30);
        let activation = if case % 2 == 0 {
            Activation::Sigmoid
        } else {
            Activation::LeakyRelu
        };
        let p = random_params(
            &g,
            4,
            3,
            activation,
            Precedence::HadamardFirst,
            case % 3 == 0,
            &mut rng,
        );
        let gap = worst_gap(&g, &p);
        assert!(gap <= 1e-10, "case {case}: gap {gap:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_equivalence_holds_for_any_configuration(
        seed in any::<u64>(),
        d in 1usize..5,
        layers in 1usize..4,
        sigmoid in any::<bool>(),
        hadamard_first in any::<bool>(),
        bias in any::<bool>(),
    ) {
        let mut rng = RngStream::new(seed);
        let g = random_graph(&mut rng, 30);
        let activation = if sigmoid { Activation::Sigmoid } else { Activation::LeakyRelu };
        let precedence = if hadamard_first { Precedence::HadamardFirst } else { Precedence::TransformFirst };
        let p = random_params(&g, d, layers, activation, precedence, bias, &mut rng);
        prop_assert!(worst_gap(&g, &p) <= 1e-10);
    }

    #[test]
    fn initial_basket_layer_is_zero(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let g = random_graph(&mut rng, 30);
        let p = random_params(&g, 3, 1, Activation::Sigmoid, Precedence::HadamardFirst, true, &mut rng);
        let out = forward(&g, &p).unwrap();
        prop_assert!(out.baskets[0].as_slice().iter().all(|&x| x == 0.0));
    }
}
