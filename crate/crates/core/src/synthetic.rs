//! Planted-intent transaction logs for tests and demos.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Transaction, TransactionLog};
use crate::kernels::RngStream;

/// Items are partitioned into disjoint intents; every basket draws its items
/// from a single intent chosen uniformly at random, independently of its owner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    pub intents: usize,
    pub items_per_intent: usize,
    pub users: usize,
    pub baskets_per_user: usize,
    pub basket_size: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            intents: 4,
            items_per_intent: 8,
            users: 60,
            baskets_per_user: 4,
            basket_size: 6,
            seed: 7,
        }
    }
}

impl PlantedConfig {
    /// Intent of an item id produced by [`planted_intents`].
    pub fn intent_of(&self, item: &str) -> Option<usize> {
        let n: usize = item.strip_prefix('i')?.parse().ok()?;
        (n < self.intents * self.items_per_intent).then_some(n / self.items_per_intent)
    }
}

/// Generates the log. User ids are `u{n}`, baskets `u{n}-b{m}`, items `i{n}`
/// with items `i{k·p}..i{(k+1)·p}` forming intent `k`.
pub fn planted_intents(config: &PlantedConfig) -> Result<TransactionLog> {
    let c = config;
    if c.intents == 0 || c.users == 0 || c.baskets_per_user == 0 {
        return Err(Error::Config(
            "planted data needs intents, users and baskets".into(),
        ));
    }
    if c.basket_size < 2 || c.basket_size > c.items_per_intent {
        return Err(Error::Config(format!(
            "basket size must lie in 2..={}, got {}",
            c.items_per_intent, c.basket_size
        )));
    }
    let mut rng = RngStream::new(c.seed);
    let mut records = Vec::with_capacity(c.users * c.baskets_per_user * c.basket_size);
    for u in 0..c.users {
        for b in 0..c.baskets_per_user {
            let intent = rng.gen_range(0..c.intents);
            let mut picks = sample(&mut rng, c.items_per_intent, c.basket_size).into_vec();
            picks.sort_unstable();
            for p in picks {
                records.push(Transaction {
                    user: format!("u{u}"),
                    basket: format!("u{u}-b{b}"),
                    item: format!("i{}", intent * c.items_per_intent + p),
                });
            }
        }
    }
    TransactionLog::from_records(records)
}
