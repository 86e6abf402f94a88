//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use basconv::graph::{build_ubi_graph, Transaction, TransactionLog, UbiGraph};
use basconv::kernels::Activation;
use basconv::kernels::{DenseMatrix, RngStream};
use basconv::model::{ModelParams, Precedence};
use rand::Rng;

pub fn tx(u: &str, b: &str, i: &str) -> Transaction {
    Transaction {
        user: u.to_owned(),
        basket: b.to_owned(),
        item: i.to_owned(),
    }
}

/// A random UBI graph with at most `max_vertices` vertices in total.
pub fn random_graph(rng: &mut RngStream, max_vertices: usize) -> UbiGraph {
    loop {
        let n_users = rng.gen_range(1..=4);
        let n_items = rng.gen_range(2..=10);
        let budget = max_vertices.saturating_sub(n_users + n_items).max(1);
        let n_baskets = rng.gen_range(1..=budget.min(12));
        let mut records = Vec::new();
        for b in 0..n_baskets {
            let u = rng.gen_range(0..n_users);
            let size = rng.gen_range(1..=n_items.min(5));
            for _ in 0..size {
                let i = rng.gen_range(0..n_items);
                records.push(tx(&format!("u{u}"), &format!("b{b}"), &format!("i{i}")));
            }
        }
        let log = TransactionLog::from_records(records).unwrap();
        let g = build_ubi_graph(&log, 1).unwrap();
        if g.n_users() + g.n_baskets() + g.n_items() <= max_vertices {
            return g;
        }
    }
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut RngStream) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

fn act(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::LeakyRelu => {
            if x >= 0.0 {
                x
            } else {
                0.2 * x
            }
        }
    }
}

/// `v·W` for a row vector.
fn vec_mat(v: &[f64], w: &DenseMatrix) -> Vec<f64> {
    (0..w.cols())
        .map(|c| v.iter().enumerate().map(|(r, x)| x * w.get(r, c)).sum())
        .collect()
}

fn mean_of(rows: &[&[f64]], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r.iter()) {
            *a += b;
        }
    }
    if !rows.is_empty() {
        m.iter_mut().for_each(|x| *x /= rows.len() as f64);
    }
    m
}

fn interactive(agg: &[f64], own: &[f64], w: &DenseMatrix, precedence: Precedence) -> Vec<f64> {
    match precedence {
        Precedence::HadamardFirst => {
            let had: Vec<f64> = agg.iter().zip(own).map(|(a, b)| a * b).collect();
            vec_mat(&had, w)
        }
        Precedence::TransformFirst => agg
            .iter()
            .zip(vec_mat(own, w))
            .map(|(a, b)| a * b)
            .collect(),
    }
}

/// Per-layer node embeddings `[layer][node][dim]` for users, baskets, items.
pub type NodeLayers = (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>);

/// Node-by-node forward pass straight from adjacency lists.
pub fn per_node_forward(g: &UbiGraph, p: &ModelParams) -> NodeLayers {
    let d = p.dim();
    let rows = |m: &DenseMatrix| (0..m.rows()).map(|r| m.row(r).to_vec()).collect::<Vec<_>>();
    let mut users = vec![rows(&p.user_emb)];
    let mut baskets = vec![vec![vec![0.0; d]; g.n_baskets()]];
    let mut items = vec![rows(&p.item_emb)];
    for layer in &p.layers {
        let (eu, eb, ei) = (
            users.last().unwrap(),
            baskets.last().unwrap(),
            items.last().unwrap(),
        );
        let finish = |own: &[f64], t1: Vec<f64>, t2: Vec<f64>| -> Vec<f64> {
            let sp = vec_mat(own, &layer.w_sp);
            (0..d)
                .map(|c| {
                    let bias = layer.bias.as_ref().map_or(0.0, |b| b.get(0, c));
                    act(p.activation, sp[c] + t1[c] + t2[c] + bias)
                })
                .collect()
        };
        let mut nu = Vec::new();
        for u in 0..g.n_users() {
            let bs: Vec<&[f64]> = g
                .user_baskets(u)
                .iter()
                .map(|&b| eb[b].as_slice())
                .collect();
            let mut its: BTreeSet<usize> = BTreeSet::new();
            for &b in g.user_baskets(u) {
                its.extend(g.basket_items(b).iter().copied());
            }
            let is: Vec<&[f64]> = its.iter().map(|&i| ei[i].as_slice()).collect();
            let t1 = interactive(&mean_of(&bs, d), &eu[u], &layer.w_ub, p.precedence);
            let t2 = interactive(&mean_of(&is, d), &eu[u], &layer.w_ui, p.precedence);
            nu.push(finish(&eu[u], t1, t2));
        }
        let mut nb = Vec::new();
        for b in 0..g.n_baskets() {
            let owner = g.owner(b);
            let is: Vec<&[f64]> = g
                .basket_items(b)
                .iter()
                .map(|&i| ei[i].as_slice())
                .collect();
            let t1 = interactive(&eu[owner], &eb[b], &layer.w_ub, p.precedence);
            let t2 = interactive(&mean_of(&is, d), &eb[b], &layer.w_ib, p.precedence);
            nb.push(finish(&eb[b], t1, t2));
        }
        let mut ni = Vec::new();
        for i in 0..g.n_items() {
            let mut us = BTreeSet::new();
            let mut bs = Vec::new();
            for b in 0..g.n_baskets() {
                if g.basket_items(b).contains(&i) {
                    us.insert(g.owner(b));
                    bs.push(eb[b].as_slice());
                }
            }
            let uu: Vec<&[f64]> = us.iter().map(|&u| eu[u].as_slice()).collect();
            let t1 = interactive(&mean_of(&uu, d), &ei[i], &layer.w_ui, p.precedence);
            let t2 = interactive(&mean_of(&bs, d), &ei[i], &layer.w_ib, p.precedence);
            ni.push(finish(&ei[i], t1, t2));
        }
        users.push(nu);
        baskets.push(nb);
        items.push(ni);
    }
    (users, baskets, items)
}

pub fn max_diff(m: &DenseMatrix, nodes: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    assert_eq!(m.rows(), nodes.len());
    for (r, row) in nodes.iter().enumerate() {
        for (a, b) in m.row(r).iter().zip(row) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Metrics recomputed by brute force from a full ranking.
pub struct BruteMetrics {
    pub recall: f64,
    pub hr: f64,
    pub ndcg: f64,
}

pub fn brute_metrics(ranked: &[usize], heldout: &BTreeSet<usize>, k: usize) -> BruteMetrics {
    let top: Vec<usize> = ranked.iter().copied().take(k).collect();
    let hits = top.iter().filter(|i| heldout.contains(i)).count();
    let mut dcg = 0.0;
    for (pos, item) in top.iter().enumerate() {
        if heldout.contains(item) {
            dcg += 1.0 / (pos as f64 + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..heldout.len().min(k) {
        idcg += 1.0 / (pos as f64 + 2.0).log2();
    }
    BruteMetrics {
        recall: if heldout.is_empty() {
            0.0
        } else {
            hits as f64 / heldout.len() as f64
        },
        hr: if hits > 0 { 1.0 } else { 0.0 },
        ndcg: if idcg == 0.0 { 0.0 } else { dcg / idcg },
    }
}

/// Full sort of every non-excluded item by score descending, index ascending.
pub fn full_ranking(scores: &[f64], exclude: &[usize]) -> Vec<usize> {
    let mut all: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    all.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    all
}
