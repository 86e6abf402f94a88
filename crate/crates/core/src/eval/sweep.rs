use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{subsample_training, SplitResult};
use crate::trainer::{train, TrainConfig};

use super::{evaluate, train_bpr_mf, BasConvScorer, BprMf, ItemPop, RankingMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(rename = "basconv")]
    BasConv,
    ItemPop,
    BprMf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::ItemPop, ModelKind::BprMf, ModelKind::BasConv];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BasConv => "basconv",
            ModelKind::ItemPop => "item-pop",
            ModelKind::BprMf => "bpr-mf",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basconv" => Ok(ModelKind::BasConv),
            "item-pop" | "itempop" => Ok(ModelKind::ItemPop),
            "bpr-mf" | "bprmf" => Ok(ModelKind::BprMf),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected basconv, item-pop or bpr-mf)"
            ))),
        }
    }
}

/// Fits `kind` on the split from scratch and evaluates it on the held-out items.
pub fn fit_and_evaluate(
    kind: ModelKind,
    split: &SplitResult,
    config: &TrainConfig,
    k: usize,
) -> Result<RankingMetrics> {
    match kind {
        ModelKind::ItemPop => evaluate(&ItemPop::fit(split), split, k),
        ModelKind::BprMf => {
            let out = train_bpr_mf(split, config)?;
            let scorer = BprMf::new(out.params, split.train_graph.owners().to_vec());
            evaluate(&scorer, split, k)
        }
        ModelKind::BasConv => {
            let out = train(split, config)?;
            let scorer = BasConvScorer::new(&split.train_graph, &out.params)?;
            evaluate(&scorer, split, k)
        }
    }
}

/// One row of a long-form results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: ModelKind,
    pub fraction: f64,
    pub layers: usize,
    pub metrics: RankingMetrics,
    pub dropped_baskets: usize,
}

/// Subsample seed for a training fraction; the full fraction keeps the split as is.
fn fraction_seed(seed: u64, fraction: f64) -> u64 {
    seed ^ ((fraction * 1e6).round() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Retrains each model on shrinking subsamples of the training edges.
pub fn sensitivity_sweep(
    split: &SplitResult,
    fractions: &[f64],
    models: &[ModelKind],
    config: &TrainConfig,
    k: usize,
) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() || models.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one fraction and one model".into(),
        ));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        let sub = subsample_training(split, fraction, fraction_seed(config.seed, fraction))?;
        for &model in models {
            log::info!("sweep: {model} at fraction {fraction}");
            let metrics = fit_and_evaluate(model, &sub.split, config, k)?;
            rows.push(SweepRow {
                model,
                fraction,
                layers: config.model.layers,
                metrics,
                dropped_baskets: sub.dropped_baskets,
            });
        }
    }
    Ok(rows)
}

/// Retrains BasConv once per layer count.
pub fn layer_sweep(
    split: &SplitResult,
    layer_counts: &[usize],
    config: &TrainConfig,
    k: usize,
) -> Result<Vec<SweepRow>> {
    if layer_counts.is_empty() {
        return Err(Error::Config(
            "layer sweep needs at least one layer count".into(),
        ));
    }
    let mut rows = Vec::new();
    for &layers in layer_counts {
        log::info!("sweep: basconv with {layers} layers");
        let mut cfg = config.clone();
        cfg.model.layers = layers;
        let metrics = fit_and_evaluate(ModelKind::BasConv, split, &cfg, k)?;
        rows.push(SweepRow {
            model: ModelKind::BasConv,
            fraction: 1.0,
            layers,
            metrics,
            dropped_baskets: 0,
        });
    }
    Ok(rows)
}

/// Aligned text table with one row per result.
pub fn format_table(rows: &[SweepRow]) -> String {
    let k = rows.first().map_or(crate::eval::DEFAULT_K, |r| r.metrics.k);
    let header = [
        "model".to_owned(),
        "fraction".to_owned(),
        "layers".to_owned(),
        format!("Recall@{k}"),
        format!("NDCG@{k}"),
        format!("HR@{k}"),
        "baskets".to_owned(),
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.model.to_string(),
                format!("{:.2}", r.fraction),
                r.layers.to_string(),
                format!("{:.4}", r.metrics.recall_at_k),
                format!("{:.4}", r.metrics.ndcg_at_k),
                format!("{:.4}", r.metrics.hr_at_k),
                r.metrics.n_baskets.to_string(),
            ]
        })
        .collect();
    let mut widths = header.clone().map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  "));
    };
    line(&header);
    line(&widths.map(|w| "-".repeat(w)));
    for row in &body {
        line(row);
    }
    out
}

/// Writes rows as comma-separated long-form data with a header line.
pub fn write_long_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model",
        "fraction",
        "layers",
        "k",
        "recall",
        "ndcg",
        "hr",
        "n_baskets",
        "dropped_baskets",
    ])?;
    for r in rows {
        w.write_record([
            r.model.to_string(),
            r.fraction.to_string(),
            r.layers.to_string(),
            r.metrics.k.to_string(),
            r.metrics.recall_at_k.to_string(),
            r.metrics.ndcg_at_k.to_string(),
            r.metrics.hr_at_k.to_string(),
            r.metrics.n_baskets.to_string(),
            r.dropped_baskets.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
