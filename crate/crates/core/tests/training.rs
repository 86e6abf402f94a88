use basconv::eval::{
    evaluate, fit_and_evaluate, layer_sweep, sensitivity_sweep, BasConvScorer, ModelKind,
};
use basconv::graph::{build_ubi_graph, split_with_validation, SplitResult};
use basconv::model::ModelConfig;
use basconv::synthetic::{planted_intents, PlantedConfig};
use basconv::trainer::{train, TrainConfig};

fn planted_split() -> SplitResult {
    let log = planted_intents(&PlantedConfig::default()).unwrap();
    let g = build_ubi_graph(&log, 2).unwrap();
    split_with_validation(&g, 0.8, 0.2, 42).unwrap()
}

fn fast_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            dim: 8,
            layers: 2,
            ..Default::default()
        },
        learning_rate: 5e-3,
        batch_size: 64,
        epochs,
        patience: 0,
        k: 5,
        ..Default::default()
    }
}

#[test]
fn loss_falls_on_planted_data() {
    let split = planted_split();
    let out = train(&split, &fast_config(10)).unwrap();
    let first = out.history[0].mean_loss;
    let tenth = out.history[9].mean_loss;
    assert!(tenth < first, "epoch 1 {first}, epoch 10 {tenth}");
}

#[test]
fn heldout_and_validation_items_stay_out_of_the_fit_graph() {
    let split = planted_split();
    let fit = split.fit_graph();
    for (&b, items) in &split.heldout {
        for i in items {
            assert!(!split.train_graph.basket_items(b).contains(i));
            assert!(!fit.basket_items(b).contains(i));
        }
    }
    for (&b, items) in &split.masked_validation {
        for i in items {
            assert!(split.train_graph.basket_items(b).contains(i));
            assert!(!fit.basket_items(b).contains(i));
        }
    }
}

#[test]
fn full_fraction_sweep_equals_a_plain_run() {
    let split = planted_split();
    let cfg = fast_config(5);
    let rows = sensitivity_sweep(&split, &[1.0], &[ModelKind::BasConv], &cfg, 5).unwrap();
    assert_eq!(rows.len(), 1);
    let out = train(&split, &cfg).unwrap();
    let scorer = BasConvScorer::new(&split.train_graph, &out.params).unwrap();
    assert_eq!(rows[0].metrics, evaluate(&scorer, &split, 5).unwrap());
    assert_eq!(rows[0].dropped_baskets, 0);
}

#[test]
fn sweeps_have_one_row_per_setting() {
    let split = planted_split();
    let cfg = fast_config(1);
    assert_eq!(layer_sweep(&split, &[1], &cfg, 5).unwrap().len(), 1);
    let rows = layer_sweep(&split, &[1, 2, 3, 4], &cfg, 5).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.layers).collect::<Vec<_>>(),
        [1, 2, 3, 4]
    );
    let fractions = [0.2, 0.4, 0.6, 0.8, 1.0];
    let rows = sensitivity_sweep(&split, &fractions, &ModelKind::ALL, &cfg, 5).unwrap();
    for kind in ModelKind::ALL {
        assert_eq!(rows.iter().filter(|r| r.model == kind).count(), 5);
    }
}

#[test]
fn more_training_data_does_not_hurt_basconv() {
    let split = planted_split();
    let cfg = fast_config(60);
    let rows = sensitivity_sweep(&split, &[0.2, 1.0], &[ModelKind::BasConv], &cfg, 5).unwrap();
    let (small, full) = (rows[0].metrics.recall_at_k, rows[1].metrics.recall_at_k);
    assert!(full >= small, "fraction 0.2: {small}, fraction 1.0: {full}");
}

#[test]
fn item_pop_fit_and_evaluate_is_deterministic() {
    let split = planted_split();
    let cfg = fast_config(1);
    let a = fit_and_evaluate(ModelKind::ItemPop, &split, &cfg, 5).unwrap();
    let b = fit_and_evaluate(ModelKind::ItemPop, &split, &cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_baskets, split.heldout.len());
}
