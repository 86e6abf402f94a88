mod common;

use std::collections::BTreeSet;

use basconv::eval::{hr_at_k, ndcg_at_k, rank_items, recall_at_k, top_k, Scorer};
use basconv::graph::{build_ubi_graph, split_within_basket};
use basconv::kernels::RngStream;
use basconv::synthetic::{planted_intents, PlantedConfig};
use common::{brute_metrics, full_ranking, random_graph};
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use rand::Rng;

struct RandomScorer {
    scores: Vec<Vec<f64>>,
}

impl Scorer for RandomScorer {
    fn n_items(&self) -> usize {
        self.scores[0].len()
    }

    fn score_items(&self, basket: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.scores[basket]);
    }
}

/// Rankings as permutations of `0..n` with a held-out subset.
fn ranking_case() -> impl Strategy<Value = (Vec<usize>, BTreeSet<usize>, usize)> {
    (2usize..40).prop_flat_map(|n| {
        (
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            btree_set(0..n, 0..n),
            1usize..50,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metrics_match_brute_force((ranked, heldout, k) in ranking_case()) {
        let b = brute_metrics(&ranked, &heldout, k);
        prop_assert_eq!(recall_at_k(&ranked, &heldout, k), b.recall);
        prop_assert_eq!(hr_at_k(&ranked, &heldout, k), b.hr);
        prop_assert!((ndcg_at_k(&ranked, &heldout, k) - b.ndcg).abs() <= 1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_ordered((ranked, heldout, k) in ranking_case()) {
        let r = recall_at_k(&ranked, &heldout, k);
        let n = ndcg_at_k(&ranked, &heldout, k);
        let h = hr_at_k(&ranked, &heldout, k);
        for m in [r, n, h] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        prop_assert!(r <= h);
        prop_assert!(n <= h);
    }

    #[test]
    fn recall_and_hr_grow_with_k((ranked, heldout, k) in ranking_case()) {
        prop_assert!(recall_at_k(&ranked, &heldout, k) <= recall_at_k(&ranked, &heldout, k + 1));
        prop_assert!(hr_at_k(&ranked, &heldout, k) <= hr_at_k(&ranked, &heldout, k + 1));
    }

    #[test]
    fn top_k_is_a_prefix_of_the_full_sort(
        scores in vec(-3i32..3, 1..60),
        exclude in btree_set(0usize..60, 0..10),
        k in 0usize..70,
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let exclude: Vec<usize> = exclude.into_iter().filter(|&i| i < scores.len()).collect();
        let full = full_ranking(&scores, &exclude);
        let got = top_k(&scores, &exclude, k);
        prop_assert_eq!(&got[..], &full[..k.min(full.len())]);
    }

    #[test]
    fn ranked_items_never_include_training_items(seed in any::<u64>(), k in 1usize..12) {
        let mut rng = RngStream::new(seed);
        let mut g = random_graph(&mut rng, 30);
        while (0..g.n_baskets()).any(|b| g.basket_items(b).len() < 2) {
            g = random_graph(&mut rng, 30);
        }
        let split = split_within_basket(&g, 0.5, seed).unwrap();
        let scorer = RandomScorer {
            scores: (0..g.n_baskets())
                .map(|_| (0..g.n_items()).map(|_| rng.gen::<f64>()).collect())
                .collect(),
        };
        for &b in split.heldout.keys() {
            let ranked = rank_items(&scorer, &split, b, k).unwrap();
            let train: BTreeSet<usize> = split.train_graph.basket_items(b).iter().copied().collect();
            prop_assert!(ranked.iter().all(|i| !train.contains(i)));
            let distinct: BTreeSet<&usize> = ranked.iter().collect();
            prop_assert_eq!(distinct.len(), ranked.len());
        }
    }
}

#[test]
fn ranking_a_basket_without_heldout_items_is_an_error() {
    let log = planted_intents(&PlantedConfig {
        users: 4,
        ..Default::default()
    })
    .unwrap();
    let g = build_ubi_graph(&log, 2).unwrap();
    let split = split_within_basket(&g, 0.5, 5).unwrap();
    let scorer = RandomScorer {
        scores: vec![vec![0.0; g.n_items()]; g.n_baskets()],
    };
    assert!(rank_items(&scorer, &split, 0, 5).is_ok());
    assert!(rank_items(&scorer, &split, g.n_baskets() + 3, 5).is_err());
}
