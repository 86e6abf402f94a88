use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::UbiGraph;
use crate::error::{Error, Result};
use crate::kernels::RngStream;

/// Stream id for the validation mask, kept apart from the test split stream.
const VALIDATION_STREAM: u64 = 1;

/// Within-basket train/test partition.
///
/// `train_graph` keeps the vertex numbering of the source graph; only its
/// basket-item edges (and the derived user-item edges) shrink.
/// `masked_validation` is a subset of the training edges held back for model
/// selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train_graph: UbiGraph,
    pub heldout: BTreeMap<usize, BTreeSet<usize>>,
    pub masked_validation: BTreeMap<usize, BTreeSet<usize>>,
}

impl SplitResult {
    /// Training graph with the validation mask removed; this is what models
    /// are fitted on during model selection.
    pub fn fit_graph(&self) -> UbiGraph {
        if self.masked_validation.is_empty() {
            return self.train_graph.clone();
        }
        let lists = (0..self.train_graph.n_baskets())
            .map(|b| {
                let items = self.train_graph.basket_items(b);
                match self.masked_validation.get(&b) {
                    Some(mask) => items
                        .iter()
                        .copied()
                        .filter(|i| !mask.contains(i))
                        .collect(),
                    None => items.to_vec(),
                }
            })
            .collect();
        self.train_graph
            .with_basket_items(lists)
            .expect("subset of a valid graph")
    }

    /// The split seen during model selection: fit graph for training,
    /// validation mask as the held-out target.
    pub fn validation_view(&self) -> SplitResult {
        SplitResult {
            train_graph: self.fit_graph(),
            heldout: self.masked_validation.clone(),
            masked_validation: BTreeMap::new(),
        }
    }

    pub fn n_train_edges(&self) -> usize {
        self.train_graph.n_bi_edges()
    }

    /// Union of training and held-out items of `basket`.
    pub fn known_items(&self, basket: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self.train_graph.basket_items(basket).to_vec();
        if let Some(h) = self.heldout.get(&basket) {
            all.extend(h.iter().copied());
        }
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// `⌈n·frac⌉`, moved into `1..n` so both sides are nonempty.
pub fn train_count(n: usize, frac: f64) -> usize {
    debug_assert!(n >= 2);
    // The epsilon absorbs representation error such as 5 × 0.6 = 3.0000000000000004.
    let raw = (n as f64 * frac - 1e-9).ceil() as usize;
    raw.clamp(1, n - 1)
}

/// Splits every basket's items `train_frac` / `1 - train_frac`, and masks
/// `1 - train_frac` of each training portion for validation.
pub fn split_within_basket(graph: &UbiGraph, train_frac: f64, seed: u64) -> Result<SplitResult> {
    split_with_validation(graph, train_frac, 1.0 - train_frac, seed)
}

/// Like [`split_within_basket`] with an explicit validation mask fraction.
/// `validation_frac = 0` disables the mask. Baskets whose training portion
/// has fewer than two items are left out of the mask.
pub fn split_with_validation(
    graph: &UbiGraph,
    train_frac: f64,
    validation_frac: f64,
    seed: u64,
) -> Result<SplitResult> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    if !(0.0..1.0).contains(&validation_frac) {
        return Err(Error::Config(format!(
            "validation_frac must lie in [0, 1), got {validation_frac}"
        )));
    }
    let mut rng = RngStream::new(seed);
    let mut train_lists = Vec::with_capacity(graph.n_baskets());
    let mut heldout = BTreeMap::new();
    for b in 0..graph.n_baskets() {
        let mut items = graph.basket_items(b).to_vec();
        if items.len() < 2 {
            return Err(Error::BasketTooSmall {
                basket: graph.baskets().id(b).to_owned(),
                size: items.len(),
            });
        }
        items.shuffle(&mut rng);
        let n_train = train_count(items.len(), train_frac);
        heldout.insert(b, items[n_train..].iter().copied().collect());
        items.truncate(n_train);
        items.sort_unstable();
        train_lists.push(items);
    }

    let mut masked_validation = BTreeMap::new();
    if validation_frac > 0.0 {
        let mut rng = RngStream::new(seed).fork(VALIDATION_STREAM);
        for (b, items) in train_lists.iter().enumerate() {
            if items.len() < 2 {
                continue;
            }
            let mut shuffled = items.clone();
            shuffled.shuffle(&mut rng);
            let keep = train_count(items.len(), 1.0 - validation_frac);
            masked_validation.insert(b, shuffled[keep..].iter().copied().collect());
        }
    }

    Ok(SplitResult {
        train_graph: graph.with_basket_items(train_lists)?,
        heldout,
        masked_validation,
    })
}

/// Result of [`subsample_training`].
#[derive(Clone, Debug, PartialEq)]
pub struct Subsample {
    pub split: SplitResult,
    /// Baskets removed from evaluation because no training item survived.
    pub dropped_baskets: usize,
}

/// Keeps `⌈fraction·|E_bi|⌉` training edges drawn uniformly. Held-out sets are
/// unchanged except for baskets left without training items, which leave
/// evaluation. The validation mask is intersected with the kept edges.
pub fn subsample_training(split: &SplitResult, fraction: f64, seed: u64) -> Result<Subsample> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "training fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let edges: Vec<(usize, usize)> = split.train_graph.edges_bi().collect();
    let keep = ((edges.len() as f64 * fraction - 1e-9).ceil() as usize).min(edges.len());
    if keep == edges.len() {
        return Ok(Subsample {
            split: split.clone(),
            dropped_baskets: 0,
        });
    }
    let mut rng = RngStream::new(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, edges.len(), keep).into_vec();
    chosen.sort_unstable();
    let mut lists = vec![Vec::new(); split.train_graph.n_baskets()];
    for idx in chosen {
        let (b, i) = edges[idx];
        lists[b].push(i);
    }

    let mut heldout = split.heldout.clone();
    let before = heldout.len();
    heldout.retain(|b, _| !lists[*b].is_empty());
    let dropped_baskets = before - heldout.len();
    if dropped_baskets > 0 {
        log::warn!("{dropped_baskets} baskets lost all training items and leave evaluation");
    }

    let mut masked_validation = BTreeMap::new();
    for (&b, mask) in &split.masked_validation {
        let kept: BTreeSet<usize> = mask
            .iter()
            .copied()
            .filter(|i| lists[b].binary_search(i).is_ok())
            .collect();
        if !kept.is_empty() && kept.len() < lists[b].len() {
            masked_validation.insert(b, kept);
        }
    }

    Ok(Subsample {
        split: SplitResult {
            train_graph: split.train_graph.with_basket_items(lists)?,
            heldout,
            masked_validation,
        },
        dropped_baskets,
    })
}
