use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SplitResult;
use crate::kernels::{sigmoid, softplus, xavier_init, DenseMatrix, RngStream};
use crate::model::dot;
use crate::trainer::{
    fit_loop, AdamState, BprTask, Parameters, ResumeState, TrainConfig, TrainObserver, TrainOutcome,
};

use super::{evaluate, RankingMetrics, Scorer};

/// User and item factors of a BPR matrix factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfParams {
    pub user_emb: DenseMatrix,
    pub item_emb: DenseMatrix,
}

impl MfParams {
    pub fn init(n_users: usize, n_items: usize, dim: usize, rng: &mut RngStream) -> Self {
        MfParams {
            user_emb: xavier_init(n_users, dim, rng),
            item_emb: xavier_init(n_items, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.user_emb.cols()
    }

    fn zeros_like(&self) -> Self {
        MfParams {
            user_emb: DenseMatrix::zeros(self.user_emb.rows(), self.user_emb.cols()),
            item_emb: DenseMatrix::zeros(self.item_emb.rows(), self.item_emb.cols()),
        }
    }
}

impl Parameters for MfParams {
    fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        vec![
            ("user_emb".to_owned(), &self.user_emb),
            ("item_emb".to_owned(), &self.item_emb),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.user_emb, &mut self.item_emb]
    }
}

#[derive(Clone, Debug)]
pub struct MfGradients {
    pub loss: f64,
    pub grads: MfParams,
}

/// BPR loss and gradient for `(user, positive, negative)` triplets.
pub fn mf_backward(
    params: &MfParams,
    triplets: &[(usize, usize, usize)],
    lambda: f64,
) -> Result<MfGradients> {
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let (eu, ei) = (&params.user_emb, &params.item_emb);
    for &(u, p, n) in triplets {
        let x = dot(eu.row(u), ei.row(p)) - dot(eu.row(u), ei.row(n));
        loss += softplus(-x);
        let g = sigmoid(x) - 1.0;
        for k in 0..params.dim() {
            let (uk, pk, nk) = (eu.get(u, k), ei.get(p, k), ei.get(n, k));
            grads.user_emb.row_mut(u)[k] += g * (pk - nk);
            grads.item_emb.row_mut(p)[k] += g * uk;
            grads.item_emb.row_mut(n)[k] -= g * uk;
        }
    }
    loss += lambda * params.squared_norm();
    if lambda != 0.0 {
        grads.user_emb.add_scaled_assign(eu, 2.0 * lambda)?;
        grads.item_emb.add_scaled_assign(ei, 2.0 * lambda)?;
    }
    if let Some(param) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { param, step: 0 });
    }
    Ok(MfGradients { loss, grads })
}

/// BPR-MF over user-item interactions merged from every training basket.
struct MfTask {
    users: Vec<usize>,
    positives: Vec<Vec<usize>>,
    excluded: Vec<Vec<usize>>,
    n_items: usize,
    n_edges: usize,
    owner: Vec<usize>,
    validation: Option<SplitResult>,
}

impl MfTask {
    fn new(split: &SplitResult) -> Result<Self> {
        let fit = split.fit_graph();
        let n_items = fit.n_items();
        let mut positives = Vec::with_capacity(fit.n_users());
        let mut excluded = Vec::with_capacity(fit.n_users());
        let mut users = Vec::new();
        for u in 0..fit.n_users() {
            let pos = fit.user_items(u).to_vec();
            let mut ex = split.train_graph.user_items(u).to_vec();
            for &b in fit.user_baskets(u) {
                for map in [&split.heldout, &split.masked_validation] {
                    if let Some(extra) = map.get(&b) {
                        ex.extend(extra.iter().copied());
                    }
                }
            }
            ex.sort_unstable();
            ex.dedup();
            if !pos.is_empty() && ex.len() < n_items {
                users.push(u);
            }
            positives.push(pos);
            excluded.push(ex);
        }
        if users.is_empty() {
            return Err(Error::Invalid(
                "no user has both a training item and a possible negative".into(),
            ));
        }
        let has_validation = split.masked_validation.values().any(|s| !s.is_empty());
        Ok(MfTask {
            users,
            positives,
            excluded,
            n_items,
            n_edges: fit.n_ui_edges(),
            owner: fit.owners().to_vec(),
            validation: has_validation.then(|| split.validation_view()),
        })
    }

    fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<(usize, usize, usize)> {
        (0..n)
            .map(|_| {
                let u = self.users[rng.gen_range(0..self.users.len())];
                let pos = &self.positives[u];
                let p = pos[rng.gen_range(0..pos.len())];
                let ex = &self.excluded[u];
                let n = loop {
                    let j = rng.gen_range(0..self.n_items);
                    if ex.binary_search(&j).is_err() {
                        break j;
                    }
                };
                (u, p, n)
            })
            .collect()
    }
}

impl BprTask for MfTask {
    type Params = MfParams;

    fn n_train_edges(&self) -> usize {
        self.n_edges
    }

    fn batch(
        &self,
        params: &MfParams,
        batch_size: usize,
        lambda: f64,
        rng: &mut RngStream,
    ) -> Result<(f64, MfParams)> {
        let triplets = self.sample(batch_size, rng);
        let g = mf_backward(params, &triplets, lambda)?;
        Ok((g.loss, g.grads))
    }

    fn validate(&self, params: &MfParams, k: usize) -> Result<Option<RankingMetrics>> {
        let Some(view) = &self.validation else {
            return Ok(None);
        };
        let scorer = BprMf::new(params.clone(), self.owner.clone());
        evaluate(&scorer, view, k).map(Some)
    }
}

/// Trains BPR-MF with the same loss, sampler conventions and optimizer as BasConv.
pub fn train_bpr_mf(split: &SplitResult, config: &TrainConfig) -> Result<TrainOutcome<MfParams>> {
    train_bpr_mf_with(split, config, None, &mut ())
}

pub fn train_bpr_mf_with(
    split: &SplitResult,
    config: &TrainConfig,
    resume: Option<ResumeState<MfParams>>,
    observer: &mut dyn TrainObserver<MfParams>,
) -> Result<TrainOutcome<MfParams>> {
    config.validate()?;
    let task = MfTask::new(split)?;
    let g = &split.train_graph;
    let start = match resume {
        Some(r) => {
            if r.params.user_emb.rows() != g.n_users() || r.params.item_emb.rows() != g.n_items() {
                return Err(Error::Invalid(
                    "factor shapes do not match the graph".into(),
                ));
            }
            r
        }
        None => {
            let mut rng = RngStream::new(config.seed);
            let params = MfParams::init(g.n_users(), g.n_items(), config.model.dim, &mut rng);
            let adam = AdamState::new(&params);
            ResumeState::fresh(params, adam)
        }
    };
    fit_loop(&task, start, config, observer)
}

/// Scores `e_{owner(b)}·e_i`.
#[derive(Clone, Debug)]
pub struct BprMf {
    params: MfParams,
    owner: Vec<usize>,
}

impl BprMf {
    pub fn new(params: MfParams, owner: Vec<usize>) -> Self {
        BprMf { params, owner }
    }

    pub fn params(&self) -> &MfParams {
        &self.params
    }
}

impl Scorer for BprMf {
    fn n_items(&self) -> usize {
        self.params.item_emb.rows()
    }

    fn score_items(&self, basket: usize, out: &mut [f64]) {
        let eu = self.params.user_emb.row(self.owner[basket]);
        for (i, s) in out.iter_mut().enumerate() {
            *s = dot(eu, self.params.item_emb.row(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(p: &MfParams, t: &[(usize, usize, usize)], lambda: f64) -> f64 {
        mf_backward(p, t, lambda).unwrap().loss
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(5);
        let params = MfParams::init(3, 5, 4, &mut rng);
        let triplets = [(0, 1, 2), (1, 0, 4), (2, 3, 1), (0, 1, 3)];
        let lambda = 0.01;
        let g = mf_backward(&params, &triplets, lambda).unwrap().grads;
        let h = 1e-6;
        let n_tensors = params.tensors().len();
        for t in 0..n_tensors {
            let len = params.tensors()[t].1.as_slice().len();
            for k in 0..len {
                let mut plus = params.clone();
                plus.tensors_mut()[t].as_mut_slice()[k] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[t].as_mut_slice()[k] -= h;
                let fd =
                    (loss(&plus, &triplets, lambda) - loss(&minus, &triplets, lambda)) / (2.0 * h);
                let an = g.tensors()[t].1.as_slice()[k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-5);
                assert!(rel <= 1e-4, "tensor {t} entry {k}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn separable_case_ranks_positive_first() {
        use crate::graph::{build_ubi_graph, Transaction, TransactionLog};
        let rec = |u: &str, b: &str, i: &str| Transaction {
            user: u.into(),
            basket: b.into(),
            item: i.into(),
        };
        // One user buying only i1; i2 exists through another user's basket.
        let log = TransactionLog::from_records([
            rec("u1", "b1", "i1"),
            rec("u1", "b2", "i1"),
            rec("u2", "b3", "i2"),
        ])
        .unwrap();
        let g = build_ubi_graph(&log, 1).unwrap();
        let split = SplitResult {
            train_graph: g.clone(),
            heldout: Default::default(),
            masked_validation: Default::default(),
        };
        let config = TrainConfig {
            learning_rate: 1e-2,
            epochs: 50,
            batch_size: 4,
            model: crate::model::ModelConfig {
                dim: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train_bpr_mf(&split, &config).unwrap();
        let mf = BprMf::new(out.params, g.owners().to_vec());
        let mut s = vec![0.0; 2];
        mf.score_items(0, &mut s);
        assert!(s[0] > s[1]);
    }
}
