//! The user-basket-item (UBI) graph.
//!
//! Users, baskets and items are numbered densely in order of first appearance
//! in the filtered transaction log. Every basket has exactly one owner; the
//! user-item edge set is derived: `(u, i)` exists iff some basket owned by `u`
//! contains `i`.

mod io;
mod split;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::InteractionMatrix;

pub use io::{export_edge_list, load_instacart, load_transactions, read_edge_list, ColumnSpec};
pub use split::{
    split_with_validation, split_within_basket, subsample_training, train_count, SplitResult,
    Subsample,
};

/// One row of a transaction log.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub user: String,
    pub basket: String,
    pub item: String,
}

/// Deduplicated transactions in input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransactionLog {
    records: Vec<Transaction>,
}

impl TransactionLog {
    /// Collapses duplicate `(basket, item)` rows and rejects baskets that
    /// appear under more than one user.
    pub fn from_records(records: impl IntoIterator<Item = Transaction>) -> Result<Self> {
        let mut owners: HashMap<String, String> = HashMap::new();
        let mut seen: std::collections::HashSet<(String, String)> = Default::default();
        let mut out = Vec::new();
        for t in records {
            match owners.get(&t.basket) {
                Some(u) if *u != t.user => {
                    return Err(Error::DataIntegrity(format!(
                        "basket `{}` appears under users `{}` and `{}`",
                        t.basket, u, t.user
                    )));
                }
                Some(_) => {}
                None => {
                    owners.insert(t.basket.clone(), t.user.clone());
                }
            }
            if seen.insert((t.basket.clone(), t.item.clone())) {
                out.push(t);
            }
        }
        Ok(TransactionLog { records: out })
    }

    pub fn records(&self) -> &[Transaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps every record of `n` users drawn uniformly without replacement.
    /// Users keep their first-appearance order.
    pub fn sample_users(&self, n: usize, seed: u64) -> TransactionLog {
        let mut users: Vec<&str> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for t in &self.records {
            if !index.contains_key(t.user.as_str()) {
                index.insert(&t.user, users.len());
                users.push(&t.user);
            }
        }
        if n >= users.len() {
            return self.clone();
        }
        let mut rng = crate::kernels::RngStream::new(seed);
        let mut keep = vec![false; users.len()];
        for pos in rand::seq::index::sample(&mut rng, users.len(), n) {
            keep[pos] = true;
        }
        TransactionLog {
            records: self
                .records
                .iter()
                .filter(|t| keep[index[t.user.as_str()]])
                .cloned()
                .collect(),
        }
    }
}

/// Raw id ↔ dense index table for one vertex class.
#[derive(Clone, Debug, Default)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    fn from_ids(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        IdMap { ids, index }
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

impl PartialEq for IdMap {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// users × baskets
    Ub,
    /// baskets × items
    Bi,
    /// users × items
    Ui,
}

/// Tripartite user-basket-item graph over dense indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphRecord", try_from = "GraphRecord")]
pub struct UbiGraph {
    users: Arc<IdMap>,
    baskets: Arc<IdMap>,
    items: Arc<IdMap>,
    owner: Vec<usize>,
    basket_items: Vec<Vec<usize>>,
    user_baskets: Vec<Vec<usize>>,
    user_items: Vec<Vec<usize>>,
    item_users: Vec<Vec<usize>>,
    item_baskets: Vec<Vec<usize>>,
}

/// Compact serialized form; adjacency is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct GraphRecord {
    users: Vec<String>,
    baskets: Vec<String>,
    items: Vec<String>,
    owner: Vec<usize>,
    basket_items: Vec<Vec<usize>>,
}

impl From<UbiGraph> for GraphRecord {
    fn from(g: UbiGraph) -> Self {
        GraphRecord {
            users: g.users.ids.clone(),
            baskets: g.baskets.ids.clone(),
            items: g.items.ids.clone(),
            owner: g.owner,
            basket_items: g.basket_items,
        }
    }
}

impl TryFrom<GraphRecord> for UbiGraph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        UbiGraph::from_parts(
            Arc::new(IdMap::from_ids(r.users)),
            Arc::new(IdMap::from_ids(r.baskets)),
            Arc::new(IdMap::from_ids(r.items)),
            r.owner,
            r.basket_items,
        )
    }
}

impl UbiGraph {
    fn from_parts(
        users: Arc<IdMap>,
        baskets: Arc<IdMap>,
        items: Arc<IdMap>,
        owner: Vec<usize>,
        mut basket_items: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let (nu, nb, ni) = (users.len(), baskets.len(), items.len());
        if owner.len() != nb || basket_items.len() != nb {
            return Err(Error::Invalid(format!(
                "graph has {nb} baskets but {} owners and {} item lists",
                owner.len(),
                basket_items.len()
            )));
        }
        let mut user_baskets = vec![Vec::new(); nu];
        for (b, &u) in owner.iter().enumerate() {
            if u >= nu {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: u,
                    len: nu,
                });
            }
            user_baskets[u].push(b);
        }
        let mut user_items = vec![Vec::new(); nu];
        let mut item_baskets = vec![Vec::new(); ni];
        for (b, list) in basket_items.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &i in list.iter() {
                if i >= ni {
                    return Err(Error::IndexOutOfRange {
                        what: "item",
                        index: i,
                        len: ni,
                    });
                }
                item_baskets[i].push(b);
                user_items[owner[b]].push(i);
            }
        }
        let mut item_users = vec![Vec::new(); ni];
        for (u, list) in user_items.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &i in list.iter() {
                item_users[i].push(u);
            }
        }
        Ok(UbiGraph {
            users,
            baskets,
            items,
            owner,
            basket_items,
            user_baskets,
            user_items,
            item_users,
            item_baskets,
        })
    }

    /// Same vertex sets and owners with a different basket→item edge set. The
    /// user-item edges are re-derived from `basket_items`.
    pub fn with_basket_items(&self, basket_items: Vec<Vec<usize>>) -> Result<UbiGraph> {
        UbiGraph::from_parts(
            self.users.clone(),
            self.baskets.clone(),
            self.items.clone(),
            self.owner.clone(),
            basket_items,
        )
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_baskets(&self) -> usize {
        self.baskets.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn owner(&self, basket: usize) -> usize {
        self.owner[basket]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    /// N_i(b), sorted.
    pub fn basket_items(&self, basket: usize) -> &[usize] {
        &self.basket_items[basket]
    }

    /// N_b(u), ascending.
    pub fn user_baskets(&self, user: usize) -> &[usize] {
        &self.user_baskets[user]
    }

    /// N_i(u), sorted.
    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.user_items[user]
    }

    /// N_u(i), ascending.
    pub fn item_users(&self, item: usize) -> &[usize] {
        &self.item_users[item]
    }

    /// N_b(i), ascending.
    pub fn item_baskets(&self, item: usize) -> &[usize] {
        &self.item_baskets[item]
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn baskets(&self) -> &IdMap {
        &self.baskets
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn edges_ub(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.owner.iter().enumerate().map(|(b, &u)| (u, b))
    }

    pub fn edges_bi(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.basket_items
            .iter()
            .enumerate()
            .flat_map(|(b, items)| items.iter().map(move |&i| (b, i)))
    }

    pub fn edges_ui(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    pub fn n_bi_edges(&self) -> usize {
        self.basket_items.iter().map(Vec::len).sum()
    }

    pub fn n_ui_edges(&self) -> usize {
        self.user_items.iter().map(Vec::len).sum()
    }

    /// Binary interaction matrix `R_ub`, `R_bi` or `R_ui`.
    pub fn interaction_matrix(&self, relation: Relation) -> InteractionMatrix {
        let (nu, nb, ni) = (self.n_users(), self.n_baskets(), self.n_items());
        match relation {
            Relation::Ub => InteractionMatrix::from_edges(nu, nb, self.edges_ub()),
            Relation::Bi => InteractionMatrix::from_edges(nb, ni, self.edges_bi()),
            Relation::Ui => InteractionMatrix::from_edges(nu, ni, self.edges_ui()),
        }
        .expect("graph edges are in range by construction")
    }

    /// SHA-256 over the three id tables, used to pair checkpoints with graphs.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (tag, map) in [("u", &self.users), ("b", &self.baskets), ("i", &self.items)] {
            h.update(tag.as_bytes());
            h.update((map.len() as u64).to_le_bytes());
            for id in map.ids() {
                h.update((id.len() as u64).to_le_bytes());
                h.update(id.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// The basket→item edges as raw-id transactions, in index order.
    pub fn to_transaction_log(&self) -> TransactionLog {
        let records = self
            .edges_bi()
            .map(|(b, i)| Transaction {
                user: self.users.id(self.owner[b]).to_owned(),
                basket: self.baskets.id(b).to_owned(),
                item: self.items.id(i).to_owned(),
            })
            .collect();
        TransactionLog { records }
    }

    pub fn summary(&self) -> GraphSummary {
        let hist = |sizes: &mut dyn Iterator<Item = usize>| {
            let mut h = BTreeMap::new();
            for s in sizes {
                *h.entry(s).or_insert(0usize) += 1;
            }
            h
        };
        let n_interactions = self.n_bi_edges();
        GraphSummary {
            n_users: self.n_users(),
            n_baskets: self.n_baskets(),
            n_items: self.n_items(),
            n_interactions,
            n_user_item_edges: self.n_ui_edges(),
            avg_baskets_per_user: ratio(self.n_baskets(), self.n_users()),
            avg_basket_size: ratio(n_interactions, self.n_baskets()),
            basket_size_histogram: hist(&mut self.basket_items.iter().map(Vec::len)),
            user_basket_histogram: hist(&mut self.user_baskets.iter().map(Vec::len)),
            item_basket_histogram: hist(&mut self.item_baskets.iter().map(Vec::len)),
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Counts and degree histograms of a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n_users: usize,
    pub n_baskets: usize,
    pub n_items: usize,
    /// Basket-item edges.
    pub n_interactions: usize,
    pub n_user_item_edges: usize,
    pub avg_baskets_per_user: f64,
    pub avg_basket_size: f64,
    pub basket_size_histogram: BTreeMap<usize, usize>,
    pub user_basket_histogram: BTreeMap<usize, usize>,
    pub item_basket_histogram: BTreeMap<usize, usize>,
}

/// Drops baskets with fewer than `min_basket_size` distinct items, then users
/// and items left without edges, and numbers the survivors by first
/// appearance in the filtered log.
pub fn build_ubi_graph(log: &TransactionLog, min_basket_size: usize) -> Result<UbiGraph> {
    if min_basket_size == 0 {
        return Err(Error::Config("min_basket_size must be at least 1".into()));
    }
    let mut sizes: HashMap<&str, usize> = HashMap::new();
    let mut all_users: std::collections::HashSet<&str> = Default::default();
    let mut all_items: std::collections::HashSet<&str> = Default::default();
    for t in log.records() {
        *sizes.entry(&t.basket).or_insert(0) += 1;
        all_users.insert(&t.user);
        all_items.insert(&t.item);
    }
    let mut users = IdMap::default();
    let mut baskets = IdMap::default();
    let mut items = IdMap::default();
    let mut owner = Vec::new();
    let mut basket_items: Vec<Vec<usize>> = Vec::new();
    for t in log.records() {
        if sizes[t.basket.as_str()] < min_basket_size {
            continue;
        }
        let u = users.intern(&t.user);
        let b = baskets.intern(&t.basket);
        let i = items.intern(&t.item);
        if b == owner.len() {
            owner.push(u);
            basket_items.push(Vec::new());
        }
        basket_items[b].push(i);
    }
    if baskets.is_empty() {
        return Err(Error::EmptyGraph {
            min_basket_size,
            total_baskets: sizes.len(),
            dropped_baskets: sizes.len(),
            dropped_users: all_users.len(),
            dropped_items: all_items.len(),
        });
    }
    let dropped = sizes.len() - baskets.len();
    if dropped > 0 {
        log::info!(
            "dropped {dropped} of {} baskets below {min_basket_size} items; {} users and {} items remain",
            sizes.len(),
            users.len(),
            items.len()
        );
    }
    UbiGraph::from_parts(
        Arc::new(users),
        Arc::new(baskets),
        Arc::new(items),
        owner,
        basket_items,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DenseMatrix;

    pub(crate) fn tx(u: &str, b: &str, i: &str) -> Transaction {
        Transaction {
            user: u.into(),
            basket: b.into(),
            item: i.into(),
        }
    }

    fn small_log() -> TransactionLog {
        TransactionLog::from_records([
            tx("u1", "b1", "i1"),
            tx("u1", "b1", "i2"),
            tx("u2", "b2", "i1"),
        ])
        .unwrap()
    }

    #[test]
    fn dedup_keeps_first_occurrence_order() {
        let log = TransactionLog::from_records([
            tx("u1", "b1", "i1"),
            tx("u1", "b1", "i1"),
            tx("u1", "b1", "i2"),
        ])
        .unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.records()[1].item, "i2");
    }

    #[test]
    fn basket_with_two_owners_is_rejected() {
        let err =
            TransactionLog::from_records([tx("u1", "b1", "i1"), tx("u2", "b1", "i2")]).unwrap_err();
        assert!(matches!(err, Error::DataIntegrity(ref m) if m.contains("b1")));
    }

    #[test]
    fn builds_small_graph() {
        let g = build_ubi_graph(&small_log(), 1).unwrap();
        assert_eq!((g.n_users(), g.n_baskets(), g.n_items()), (2, 2, 2));
        // Oracle: union of items over each user's baskets.
        let mut expected = Vec::new();
        for u in 0..g.n_users() {
            let mut items: Vec<usize> = g
                .user_baskets(u)
                .iter()
                .flat_map(|&b| g.basket_items(b).iter().copied())
                .collect();
            items.sort_unstable();
            items.dedup();
            expected.extend(items.into_iter().map(|i| (u, i)));
        }
        let ui: Vec<_> = g.edges_ui().collect();
        assert_eq!(ui, expected);
        assert_eq!(ui, vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(g.users().id(0), "u1");
        assert_eq!(g.items().index("i2"), Some(1));
    }

    #[test]
    fn threshold_above_every_basket_is_empty_graph() {
        let err = build_ubi_graph(&small_log(), 3).unwrap_err();
        match err {
            Error::EmptyGraph {
                dropped_baskets,
                total_baskets,
                ..
            } => assert_eq!((dropped_baskets, total_baskets), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filtering_compacts_indices() {
        let log = TransactionLog::from_records([
            tx("u0", "b0", "i9"),
            tx("u1", "b1", "i1"),
            tx("u1", "b1", "i2"),
            tx("u2", "b2", "i2"),
            tx("u2", "b2", "i3"),
        ])
        .unwrap();
        let g = build_ubi_graph(&log, 2).unwrap();
        assert_eq!((g.n_users(), g.n_baskets(), g.n_items()), (2, 2, 3));
        assert_eq!(g.users().ids(), ["u1", "u2"]);
        assert_eq!(g.items().ids(), ["i1", "i2", "i3"]);
        for b in 0..g.n_baskets() {
            assert!(g.basket_items(b).len() >= 2);
        }
    }

    #[test]
    fn interaction_matrices() {
        let g = build_ubi_graph(&small_log(), 1).unwrap();
        let ub = g.interaction_matrix(Relation::Ub);
        assert_eq!(
            ub.to_dense(),
            DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])
        );
        let bi = g.interaction_matrix(Relation::Bi);
        assert_eq!(
            bi.to_dense(),
            DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 0.0]])
        );
        assert_eq!(bi.nnz(), g.n_bi_edges());
        assert_eq!(g.interaction_matrix(Relation::Ui).nnz(), g.n_ui_edges());
    }

    #[test]
    fn ub_matrix_has_one_entry_per_column() {
        let log = TransactionLog::from_records((0..30).map(|k| {
            tx(
                &format!("u{}", k % 4),
                &format!("b{}", k % 9),
                &format!("i{k}"),
            )
        }));
        // b{k%9} maps to u{k%4} inconsistently for some k; keep only consistent rows.
        assert!(log.is_err());
        let log = TransactionLog::from_records((0..30).map(|k| {
            tx(
                &format!("u{}", (k % 9) % 4),
                &format!("b{}", k % 9),
                &format!("i{k}"),
            )
        }))
        .unwrap();
        let g = build_ubi_graph(&log, 1).unwrap();
        let ubt = g.interaction_matrix(Relation::Ub).transpose();
        for b in 0..g.n_baskets() {
            assert_eq!(ubt.row(b).0.len(), 1);
        }
    }

    #[test]
    fn serde_round_trip_rebuilds_adjacency() {
        let g = build_ubi_graph(&small_log(), 1).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: UbiGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.fingerprint(), g.fingerprint());
    }

    #[test]
    fn user_sampling_keeps_whole_users() {
        let log = TransactionLog::from_records((0..40).map(|k| {
            tx(
                &format!("u{}", k % 10),
                &format!("b{}", k % 20),
                &format!("i{}", k % 7),
            )
        }))
        .unwrap();
        let s = log.sample_users(3, 1);
        let users: std::collections::BTreeSet<_> = s.records().iter().map(|t| &t.user).collect();
        assert_eq!(users.len(), 3);
        for u in users {
            let full = log.records().iter().filter(|t| &t.user == u).count();
            let kept = s.records().iter().filter(|t| &t.user == u).count();
            assert_eq!(full, kept);
        }
        assert_eq!(s, log.sample_users(3, 1));
    }
}
