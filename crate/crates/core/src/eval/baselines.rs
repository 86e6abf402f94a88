use crate::graph::{SplitResult, UbiGraph};

use super::Scorer;

/// User-wise item popularity.
///
/// An item's score for basket `b` is the number of training baskets of
/// `owner(b)` containing it, ties broken by the number of training baskets
/// overall containing it. Both parts are packed into one exact integer
/// `count·(G + 1) + global` with `G` the largest global count.
#[derive(Clone, Debug)]
pub struct ItemPop {
    owner: Vec<usize>,
    user_counts: Vec<Vec<(usize, usize)>>,
    global: Vec<usize>,
}

impl ItemPop {
    pub fn fit(split: &SplitResult) -> Self {
        Self::from_graph(&split.train_graph)
    }

    pub fn from_graph(graph: &UbiGraph) -> Self {
        let mut global = vec![0usize; graph.n_items()];
        for b in 0..graph.n_baskets() {
            for &i in graph.basket_items(b) {
                global[i] += 1;
            }
        }
        let user_counts = (0..graph.n_users())
            .map(|u| {
                let mut counts = std::collections::BTreeMap::new();
                for &b in graph.user_baskets(u) {
                    for &i in graph.basket_items(b) {
                        *counts.entry(i).or_insert(0usize) += 1;
                    }
                }
                counts.into_iter().collect()
            })
            .collect();
        ItemPop {
            owner: graph.owners().to_vec(),
            user_counts,
            global,
        }
    }

    /// Training baskets of `user` that contain `item`.
    pub fn count(&self, user: usize, item: usize) -> usize {
        let counts = &self.user_counts[user];
        counts
            .binary_search_by_key(&item, |&(i, _)| i)
            .map_or(0, |k| counts[k].1)
    }

    pub fn global_count(&self, item: usize) -> usize {
        self.global[item]
    }

    /// Writes the packed popularity score of every item for `user` into `out`.
    pub fn score_user(&self, user: usize, out: &mut [f64]) {
        let scale = (self.global.iter().copied().max().unwrap_or(0) + 1) as f64;
        for (s, &g) in out.iter_mut().zip(&self.global) {
            *s = g as f64;
        }
        for &(i, c) in &self.user_counts[user] {
            out[i] += c as f64 * scale;
        }
    }
}

impl Scorer for ItemPop {
    fn n_items(&self) -> usize {
        self.global.len()
    }

    fn score_items(&self, basket: usize, out: &mut [f64]) {
        self.score_user(self.owner[basket], out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::top_k;
    use crate::graph::{build_ubi_graph, Transaction, TransactionLog};

    fn graph(records: &[(&str, &str, &str)]) -> UbiGraph {
        let log = TransactionLog::from_records(records.iter().map(|(u, b, i)| Transaction {
            user: u.to_string(),
            basket: b.to_string(),
            item: i.to_string(),
        }))
        .unwrap();
        build_ubi_graph(&log, 1).unwrap()
    }

    #[test]
    fn counts_order_then_global_frequency() {
        // u1 buys i1 in three baskets and i2 in one; i3 and i4 are other users' items.
        let g = graph(&[
            ("u1", "b1", "i1"),
            ("u1", "b1", "i2"),
            ("u1", "b2", "i1"),
            ("u1", "b3", "i1"),
            ("u2", "b4", "i3"),
            ("u2", "b4", "i4"),
            ("u3", "b5", "i4"),
        ]);
        let pop = ItemPop::from_graph(&g);
        assert_eq!(pop.count(0, 0), 3);
        assert_eq!(pop.count(0, 1), 1);
        assert_eq!(pop.count(0, 3), 0);
        let mut scores = vec![0.0; 4];
        pop.score_items(0, &mut scores);
        // i1 > i2 by count; then unseen items by global count (i4: 2, i3: 1).
        assert_eq!(top_k(&scores, &[], 4), vec![0, 1, 3, 2]);
    }

    #[test]
    fn counts_match_a_log_scan() {
        let records = [
            ("a", "1", "x"),
            ("a", "1", "y"),
            ("a", "2", "x"),
            ("b", "3", "x"),
            ("b", "3", "z"),
            ("b", "4", "z"),
            ("b", "4", "y"),
        ];
        let g = graph(&records);
        let pop = ItemPop::from_graph(&g);
        for u in 0..g.n_users() {
            for i in 0..g.n_items() {
                let (uid, iid) = (g.users().id(u), g.items().id(i));
                let scan = records.iter().filter(|r| r.0 == uid && r.2 == iid).count();
                assert_eq!(pop.count(u, i), scan);
            }
        }
        let x = g.items().index("x").unwrap();
        assert_eq!(pop.global_count(x), 3);
    }
}
