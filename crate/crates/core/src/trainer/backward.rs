use crate::error::{Error, Result};
use crate::kernels::{sigmoid, softplus, DenseMatrix};
use crate::model::{
    concat_output, forward_cached, LayerParams, ModelParams, OutputEmbeddings, Precedence,
    Propagation,
};

use super::adam::Parameters;
use super::sampler::Triplet;

/// `Σ softplus(−(pos − neg)) + λ‖Θ‖²`.
pub fn bpr_loss<P: Parameters>(pos: &[f64], neg: &[f64], params: &P, lambda: f64) -> f64 {
    let data: f64 = pos.iter().zip(neg).map(|(p, n)| softplus(-(p - n))).sum();
    data + lambda * params.squared_norm()
}

/// Loss and gradients of one minibatch.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub loss: f64,
    pub grads: ModelParams,
}

/// BPR loss of a batch under the full model, without gradients.
pub fn batch_loss(
    prop: &Propagation,
    params: &ModelParams,
    triplets: &[Triplet],
    lambda: f64,
) -> Result<f64> {
    let (emb, _) = forward_cached(prop, params)?;
    let out = concat_output(&emb);
    let (pos, neg) = triplet_scores(&out, prop.owners(), triplets)?;
    Ok(bpr_loss(&pos, &neg, params, lambda))
}

fn triplet_scores(
    out: &OutputEmbeddings,
    owner: &[usize],
    triplets: &[Triplet],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::with_capacity(triplets.len());
    let mut neg = Vec::with_capacity(triplets.len());
    for t in triplets {
        pos.push(out.score(owner, t.basket, t.positive)?);
        neg.push(out.score(owner, t.basket, t.negative)?);
    }
    Ok((pos, neg))
}

/// Reverse-mode gradient of the BPR loss over `triplets` with respect to
/// every parameter. Fails with [`Error::NonFiniteGradient`] naming the first
/// offending tensor.
pub fn backward(
    prop: &Propagation,
    params: &ModelParams,
    triplets: &[Triplet],
    lambda: f64,
) -> Result<Gradients> {
    let (emb, caches) = forward_cached(prop, params)?;
    let out = concat_output(&emb);
    let owner = prop.owners();
    let (pos, neg) = triplet_scores(&out, owner, triplets)?;
    let loss = bpr_loss(&pos, &neg, params, lambda);

    let width = out.width();
    let mut d_users = DenseMatrix::zeros(out.users.rows(), width);
    let mut d_baskets = DenseMatrix::zeros(out.baskets.rows(), width);
    let mut d_items = DenseMatrix::zeros(out.items.rows(), width);
    for (k, t) in triplets.iter().enumerate() {
        // d/dx softplus(−x) = σ(x) − 1.
        let g = sigmoid(pos[k] - neg[k]) - 1.0;
        let u = owner[t.basket];
        let query: Vec<f64> = out
            .users
            .row(u)
            .iter()
            .zip(out.baskets.row(t.basket))
            .map(|(a, b)| a + b)
            .collect();
        let diff: Vec<f64> = out
            .items
            .row(t.positive)
            .iter()
            .zip(out.items.row(t.negative))
            .map(|(p, n)| p - n)
            .collect();
        axpy(d_users.row_mut(u), g, &diff);
        axpy(d_baskets.row_mut(t.basket), g, &diff);
        axpy(d_items.row_mut(t.positive), g, &query);
        axpy(d_items.row_mut(t.negative), -g, &query);
    }

    let d = params.dim();
    let n_layers = params.n_layers();
    let mut grads = params.zeros_like();
    // Gradient flowing into E^(l) for the current l, starting from the top.
    let mut g_users = d_users.column_block(n_layers * d, d);
    let mut g_baskets = d_baskets.column_block(n_layers * d, d);
    let mut g_items = d_items.column_block(n_layers * d, d);
    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let cache = &caches[l];
        let act = params.activation;
        let prec = params.precedence;
        let dh_u = g_users.hadamard(&cache.pre_users.map(|x| act.derivative(x)))?;
        let dh_b = g_baskets.hadamard(&cache.pre_baskets.map(|x| act.derivative(x)))?;
        let dh_i = g_items.hadamard(&cache.pre_items.map(|x| act.derivative(x)))?;
        let (eu, eb, ei) = (&emb.users[l], &emb.baskets[l], &emb.items[l]);
        let gl = &mut grads.layers[l];

        let mut next_u = d_users.column_block(l * d, d);
        let mut next_b = d_baskets.column_block(l * d, d);
        let mut next_i = d_items.column_block(l * d, d);

        // Users: neighbors are baskets via W_ub and items via W_ui.
        let (ds, d1, d2) = aggregate_backward(
            &dh_u,
            eu,
            &cache.ub_agg,
            &cache.ui_agg,
            layer,
            Pair::UbUi,
            prec,
            gl,
        )?;
        next_u.add_assign(&ds)?;
        next_b.add_assign(&prop.ub_t.spmm(&d1)?)?;
        next_i.add_assign(&prop.ui_t.spmm(&d2)?)?;

        // Baskets: owner via W_ub and items via W_ib.
        let (ds, d1, d2) = aggregate_backward(
            &dh_b,
            eb,
            &cache.bu_agg,
            &cache.bi_agg,
            layer,
            Pair::UbIb,
            prec,
            gl,
        )?;
        next_b.add_assign(&ds)?;
        next_u.add_assign(&prop.bu_t.spmm(&d1)?)?;
        next_i.add_assign(&prop.bi_t.spmm(&d2)?)?;

        // Items: users via W_ui and baskets via W_ib.
        let (ds, d1, d2) = aggregate_backward(
            &dh_i,
            ei,
            &cache.iu_agg,
            &cache.ib_agg,
            layer,
            Pair::UiIb,
            prec,
            gl,
        )?;
        next_i.add_assign(&ds)?;
        next_u.add_assign(&prop.iu_t.spmm(&d1)?)?;
        next_b.add_assign(&prop.ib_t.spmm(&d2)?)?;

        g_users = next_u;
        g_baskets = next_b;
        g_items = next_i;
    }
    // E_b^(0) is a constant, so its gradient is dropped.
    drop(g_baskets);
    grads.user_emb = g_users;
    grads.item_emb = g_items;

    if lambda != 0.0 {
        for (g, (_, p)) in grads.tensors_mut().into_iter().zip(params.tensors()) {
            g.add_scaled_assign(p, 2.0 * lambda)?;
        }
    }
    if let Some(param) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { param, step: 0 });
    }
    Ok(Gradients { loss, grads })
}

/// Which two interaction weights an aggregator uses.
#[derive(Clone, Copy)]
enum Pair {
    UbUi,
    UbIb,
    UiIb,
}

/// Backpropagates `dH` through `S·W_sp + f(A1, S, W1) + f(A2, S, W2) + b`,
/// accumulating weight gradients into `grads` and returning the gradients
/// with respect to `S`, `A1` and `A2`.
#[allow(clippy::too_many_arguments)]
fn aggregate_backward(
    dh: &DenseMatrix,
    self_emb: &DenseMatrix,
    first_agg: &DenseMatrix,
    second_agg: &DenseMatrix,
    layer: &LayerParams,
    pair: Pair,
    precedence: Precedence,
    grads: &mut LayerParams,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    grads.w_sp.add_assign(&self_emb.matmul_tn(dh)?)?;
    if let Some(b) = &mut grads.bias {
        for (acc, s) in b.row_mut(0).iter_mut().zip(dh.column_sums()) {
            *acc += s;
        }
    }
    let mut d_self = dh.matmul(&layer.w_sp.transpose())?;
    let (w1, w2) = match pair {
        Pair::UbUi => (&layer.w_ub, &layer.w_ui),
        Pair::UbIb => (&layer.w_ub, &layer.w_ib),
        Pair::UiIb => (&layer.w_ui, &layer.w_ib),
    };
    let (dw1, da1) = interact_backward(dh, self_emb, first_agg, w1, precedence, &mut d_self)?;
    let (dw2, da2) = interact_backward(dh, self_emb, second_agg, w2, precedence, &mut d_self)?;
    let (g1, g2) = match pair {
        Pair::UbUi => (&mut grads.w_ub, &mut grads.w_ui),
        Pair::UbIb => (&mut grads.w_ub, &mut grads.w_ib),
        Pair::UiIb => (&mut grads.w_ui, &mut grads.w_ib),
    };
    g1.add_assign(&dw1)?;
    g2.add_assign(&dw2)?;
    Ok((d_self, da1, da2))
}

/// Backward of one interactive term; returns `(dW, dA)` and adds `dS` in place.
fn interact_backward(
    dh: &DenseMatrix,
    self_emb: &DenseMatrix,
    agg: &DenseMatrix,
    w: &DenseMatrix,
    precedence: Precedence,
    d_self: &mut DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    match precedence {
        Precedence::HadamardFirst => {
            let p = agg.hadamard(self_emb)?;
            let dw = p.matmul_tn(dh)?;
            let dp = dh.matmul(&w.transpose())?;
            d_self.add_assign(&dp.hadamard(agg)?)?;
            Ok((dw, dp.hadamard(self_emb)?))
        }
        Precedence::TransformFirst => {
            let t = self_emb.matmul(w)?;
            let dt = dh.hadamard(agg)?;
            let dw = self_emb.matmul_tn(&dt)?;
            d_self.add_assign(&dt.matmul(&w.transpose())?)?;
            Ok((dw, dh.hadamard(&t)?))
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
