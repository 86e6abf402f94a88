use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{SplitResult, UbiGraph};
use crate::kernels::RngStream;

/// A BPR training example: basket, an item in it, an item outside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub basket: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Uniform triplet sampler over a training graph.
///
/// Baskets are drawn uniformly among those with at least one positive,
/// positives uniformly among the basket's training items, and negatives
/// uniformly over all items with rejection against the basket's known items
/// (training items plus every extra exclusion set, such as held-out items).
#[derive(Clone, Debug)]
pub struct TripletSampler {
    baskets: Vec<usize>,
    positives: Vec<Vec<usize>>,
    excluded: Vec<Vec<usize>>,
    n_items: usize,
}

impl TripletSampler {
    pub fn new(graph: &UbiGraph, exclusions: &[&BTreeMap<usize, BTreeSet<usize>>]) -> Result<Self> {
        let n_items = graph.n_items();
        let mut positives = Vec::with_capacity(graph.n_baskets());
        let mut excluded = Vec::with_capacity(graph.n_baskets());
        let mut baskets = Vec::new();
        for b in 0..graph.n_baskets() {
            let pos = graph.basket_items(b).to_vec();
            let mut ex = pos.clone();
            for set in exclusions {
                if let Some(extra) = set.get(&b) {
                    ex.extend(extra.iter().copied());
                }
            }
            ex.sort_unstable();
            ex.dedup();
            if !pos.is_empty() && ex.len() < n_items {
                baskets.push(b);
            }
            positives.push(pos);
            excluded.push(ex);
        }
        if baskets.is_empty() {
            return Err(Error::Invalid(
                "no basket has both a training item and a possible negative".into(),
            ));
        }
        Ok(TripletSampler {
            baskets,
            positives,
            excluded,
            n_items,
        })
    }

    /// Sampler for a split: negatives avoid training, held-out and masked items.
    pub fn for_split(split: &SplitResult) -> Result<Self> {
        Self::new(
            &split.train_graph,
            &[&split.heldout, &split.masked_validation],
        )
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<Triplet> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one(&self, rng: &mut RngStream) -> Triplet {
        let basket = self.baskets[rng.gen_range(0..self.baskets.len())];
        let pos = &self.positives[basket];
        let positive = pos[rng.gen_range(0..pos.len())];
        let ex = &self.excluded[basket];
        let negative = loop {
            let j = rng.gen_range(0..self.n_items);
            if ex.binary_search(&j).is_err() {
                break j;
            }
        };
        Triplet {
            basket,
            positive,
            negative,
        }
    }
}

pub fn sample_triplets(split: &SplitResult, n: usize, rng: &mut RngStream) -> Result<Vec<Triplet>> {
    Ok(TripletSampler::for_split(split)?.sample(n, rng))
}
