//! Top-K ranking, metrics, baselines and experiment sweeps.

mod baselines;
mod metrics;
mod mf;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{SplitResult, UbiGraph};
use crate::model::{concat_output, forward_cached, ModelParams, OutputEmbeddings, Propagation};

pub use baselines::ItemPop;
pub use metrics::{hr_at_k, ndcg_at_k, recall_at_k};
pub use mf::{mf_backward, train_bpr_mf, train_bpr_mf_with, BprMf, MfGradients, MfParams};
pub use sweep::{
    fit_and_evaluate, format_table, layer_sweep, sensitivity_sweep, write_long_csv, ModelKind,
    SweepRow,
};

/// Default ranking cutoff.
pub const DEFAULT_K: usize = 100;

/// Scores every item for a basket. Higher is better.
pub trait Scorer: Sync {
    fn n_items(&self) -> usize;
    fn score_items(&self, basket: usize, out: &mut [f64]);
}

/// Dataset-level ranking quality, macro-averaged over evaluated baskets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
    pub hr_at_k: f64,
    pub k: usize,
    pub n_baskets: usize,
    /// Baskets with an empty held-out set, left out of the averages.
    pub skipped_baskets: usize,
}

/// BasConv scores `e*_{owner(b)}·e*_i + e*_b·e*_i` from concatenated outputs.
#[derive(Clone, Debug)]
pub struct BasConvScorer {
    out: OutputEmbeddings,
    owner: Vec<usize>,
}

impl BasConvScorer {
    pub fn new(graph: &UbiGraph, params: &ModelParams) -> Result<Self> {
        Self::from_propagation(&Propagation::new(graph), params)
    }

    pub fn from_propagation(prop: &Propagation, params: &ModelParams) -> Result<Self> {
        let (emb, _) = forward_cached(prop, params)?;
        Ok(Self::from_output(
            concat_output(&emb),
            prop.owners().to_vec(),
        ))
    }

    pub fn from_output(out: OutputEmbeddings, owner: Vec<usize>) -> Self {
        BasConvScorer { out, owner }
    }

    pub fn output(&self) -> &OutputEmbeddings {
        &self.out
    }
}

impl Scorer for BasConvScorer {
    fn n_items(&self) -> usize {
        self.out.items.rows()
    }

    fn score_items(&self, basket: usize, out: &mut [f64]) {
        let eu = self.out.users.row(self.owner[basket]);
        let eb = self.out.baskets.row(basket);
        for (i, s) in out.iter_mut().enumerate() {
            let ei = self.out.items.row(i);
            *s = crate::model::dot(eu, ei) + crate::model::dot(eb, ei);
        }
    }
}

/// Indices of the `k` best-scoring items not in `exclude` (sorted), by score
/// descending and then item index ascending.
pub fn top_k(scores: &[f64], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.binary_search(i).is_err())
        .collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand
}

/// Top-`k` items for a held-out basket, excluding its training items.
pub fn rank_items(
    scorer: &dyn Scorer,
    split: &SplitResult,
    basket: usize,
    k: usize,
) -> Result<Vec<usize>> {
    if !split.heldout.contains_key(&basket) {
        return Err(Error::Invalid(format!(
            "basket {basket} has no held-out items"
        )));
    }
    let mut scores = vec![0.0; scorer.n_items()];
    scorer.score_items(basket, &mut scores);
    Ok(top_k(&scores, split.train_graph.basket_items(basket), k))
}

/// Metrics over the split's held-out items.
pub fn evaluate(scorer: &dyn Scorer, split: &SplitResult, k: usize) -> Result<RankingMetrics> {
    evaluate_targets(scorer, &split.train_graph, &split.heldout, k)
}

/// Metrics for `targets`, with candidates excluding each basket's items in `known`.
pub fn evaluate_targets(
    scorer: &dyn Scorer,
    known: &UbiGraph,
    targets: &BTreeMap<usize, BTreeSet<usize>>,
    k: usize,
) -> Result<RankingMetrics> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if scorer.n_items() != known.n_items() {
        return Err(Error::Invalid(format!(
            "scorer covers {} items, graph has {}",
            scorer.n_items(),
            known.n_items()
        )));
    }
    if let Some((&b, _)) = targets
        .iter()
        .next_back()
        .filter(|(&b, _)| b >= known.n_baskets())
    {
        return Err(Error::IndexOutOfRange {
            what: "basket",
            index: b,
            len: known.n_baskets(),
        });
    }
    let baskets: Vec<(&usize, &BTreeSet<usize>)> =
        targets.iter().filter(|(_, h)| !h.is_empty()).collect();
    let skipped = targets.len() - baskets.len();
    if skipped > 0 {
        log::info!("{skipped} baskets with no held-out items skipped");
    }
    let per_basket: Vec<(f64, f64, f64)> = baskets
        .par_iter()
        .map_init(
            || vec![0.0; scorer.n_items()],
            |scores, (&b, held)| {
                scorer.score_items(b, scores);
                let ranked = top_k(scores, known.basket_items(b), k);
                (
                    recall_at_k(&ranked, held, k),
                    ndcg_at_k(&ranked, held, k),
                    hr_at_k(&ranked, held, k),
                )
            },
        )
        .collect();
    let n = per_basket.len();
    let (mut r, mut g, mut h) = (0.0, 0.0, 0.0);
    for (ri, gi, hi) in &per_basket {
        r += ri;
        g += gi;
        h += hi;
    }
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(RankingMetrics {
        recall_at_k: mean(r),
        ndcg_at_k: mean(g),
        hr_at_k: mean(h),
        k,
        n_baskets: n,
        skipped_baskets: skipped,
    })
}
