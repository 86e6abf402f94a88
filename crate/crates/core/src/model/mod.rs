//! BasConv forward pass.
//!
//! Each layer updates users, baskets and items simultaneously from the
//! previous layer's embeddings:
//!
//! ```text
//! E_u' = σ(E_u·W_sp + (R̃_ub E_b ⊙ E_u)·W_ub + (R̃_ui E_i ⊙ E_u)·W_ui)
//! E_b' = σ(E_b·W_sp + (R̃_bu E_u ⊙ E_b)·W_ub + (R̃_bi E_i ⊙ E_b)·W_ib)
//! E_i' = σ(E_i·W_sp + (R̃_iu E_u ⊙ E_i)·W_ui + (R̃_ib E_b ⊙ E_i)·W_ib)
//! ```
//!
//! where every `R̃_xy` is the binary relation oriented with the updated node
//! type as rows and normalized by that node's degree (`D⁻¹R`). The initial
//! basket embedding is the constant zero matrix; only the initial user and
//! item embeddings and the per-layer weights are parameters.

mod propagation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UbiGraph;
use crate::kernels::{xavier_init, Activation, DenseMatrix, RngStream};

pub use propagation::Propagation;

/// Evaluation order of the interactive layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precedence {
    /// `(neighbor_agg ⊙ self)·W`
    #[default]
    HadamardFirst,
    /// `neighbor_agg ⊙ (self·W)`
    TransformFirst,
}

impl std::str::FromStr for Precedence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hadamard-first" => Ok(Precedence::HadamardFirst),
            "transform-first" => Ok(Precedence::TransformFirst),
            other => Err(format!("unknown precedence `{other}`")),
        }
    }
}

/// Shape of a BasConv model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub activation: Activation,
    /// `None` enables biases exactly when the activation maps 0 to 0.
    pub biases: Option<bool>,
    pub precedence: Precedence,
}

impl ModelConfig {
    pub fn biases_enabled(&self) -> bool {
        self.biases
            .unwrap_or(self.activation == Activation::LeakyRelu)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            layers: 3,
            activation: Activation::Sigmoid,
            biases: None,
            precedence: Precedence::HadamardFirst,
        }
    }
}

/// Trainable weights of one propagation layer. `w_sp` is shared by all three
/// node types; each interactive weight is shared by the two node types of its
/// relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w_sp: DenseMatrix,
    pub w_ub: DenseMatrix,
    pub w_ui: DenseMatrix,
    pub w_ib: DenseMatrix,
    /// Optional `1×d` row added to every pre-activation of the layer.
    pub bias: Option<DenseMatrix>,
}

impl LayerParams {
    pub fn zeros(dim: usize, bias: bool) -> Self {
        LayerParams {
            w_sp: DenseMatrix::zeros(dim, dim),
            w_ub: DenseMatrix::zeros(dim, dim),
            w_ui: DenseMatrix::zeros(dim, dim),
            w_ib: DenseMatrix::zeros(dim, dim),
            bias: bias.then(|| DenseMatrix::zeros(1, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        LayerParams {
            w_sp: DenseMatrix::identity(dim),
            w_ub: DenseMatrix::identity(dim),
            w_ui: DenseMatrix::identity(dim),
            w_ib: DenseMatrix::identity(dim),
            bias: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_sp.rows()
    }

    /// Parameter count: `4d²`, plus `d` with a bias.
    pub fn n_params(&self) -> usize {
        let d = self.dim();
        4 * d * d + self.bias.as_ref().map_or(0, |_| d)
    }

    fn check(&self, dim: usize) -> Result<()> {
        for w in [&self.w_sp, &self.w_ub, &self.w_ui, &self.w_ib] {
            if w.shape() != (dim, dim) {
                return Err(Error::Dimension {
                    op: "layer weight",
                    left: (dim, dim),
                    right: w.shape(),
                });
            }
        }
        if let Some(b) = &self.bias {
            if b.shape() != (1, dim) {
                return Err(Error::Dimension {
                    op: "layer bias",
                    left: (1, dim),
                    right: b.shape(),
                });
            }
        }
        Ok(())
    }
}

/// All trainable parameters of a BasConv model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `E_u^(0)`, `|U|×d`.
    pub user_emb: DenseMatrix,
    /// `E_i^(0)`, `|I|×d`.
    pub item_emb: DenseMatrix,
    pub layers: Vec<LayerParams>,
    pub activation: Activation,
    pub precedence: Precedence,
}

impl ModelParams {
    /// Xavier-uniform embeddings and weights; biases start at zero.
    pub fn init(n_users: usize, n_items: usize, config: &ModelConfig, rng: &mut RngStream) -> Self {
        let d = config.dim;
        let user_emb = xavier_init(n_users.max(1), d, rng);
        let item_emb = xavier_init(n_items.max(1), d, rng);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                w_sp: xavier_init(d, d, rng),
                w_ub: xavier_init(d, d, rng),
                w_ui: xavier_init(d, d, rng),
                w_ib: xavier_init(d, d, rng),
                bias: config.biases_enabled().then(|| DenseMatrix::zeros(1, d)),
            })
            .collect();
        ModelParams {
            user_emb,
            item_emb,
            layers,
            activation: config.activation,
            precedence: config.precedence,
        }
    }

    pub fn dim(&self) -> usize {
        self.user_emb.cols()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn has_biases(&self) -> bool {
        self.layers.iter().any(|l| l.bias.is_some())
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim(),
            layers: self.n_layers(),
            activation: self.activation,
            biases: Some(self.has_biases()),
            precedence: self.precedence,
        }
    }

    /// Zero tensors of identical shapes, used as gradient accumulators.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            user_emb: DenseMatrix::zeros(self.user_emb.rows(), self.user_emb.cols()),
            item_emb: DenseMatrix::zeros(self.item_emb.rows(), self.item_emb.cols()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.dim(), l.bias.is_some()))
                .collect(),
            activation: self.activation,
            precedence: self.precedence,
        }
    }

    /// Named views of every trainable tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = vec![
            ("user_emb".to_owned(), &self.user_emb),
            ("item_emb".to_owned(), &self.item_emb),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_sp"), &layer.w_sp));
            out.push((format!("layer{l}.w_ub"), &layer.w_ub));
            out.push((format!("layer{l}.w_ui"), &layer.w_ui));
            out.push((format!("layer{l}.w_ib"), &layer.w_ib));
            if let Some(b) = &layer.bias {
                out.push((format!("layer{l}.bias"), b));
            }
        }
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = vec![&mut self.user_emb, &mut self.item_emb];
        for layer in &mut self.layers {
            out.push(&mut layer.w_sp);
            out.push(&mut layer.w_ub);
            out.push(&mut layer.w_ui);
            out.push(&mut layer.w_ib);
            if let Some(b) = &mut layer.bias {
                out.push(b);
            }
        }
        out
    }

    /// ‖Θ‖² over every trainable tensor.
    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.sum_squares()).sum()
    }

    pub fn check(&self, n_users: usize, n_items: usize) -> Result<()> {
        let d = self.dim();
        if self.user_emb.shape() != (n_users, d) {
            return Err(Error::Dimension {
                op: "user embeddings",
                left: (n_users, d),
                right: self.user_emb.shape(),
            });
        }
        if self.item_emb.shape() != (n_items, d) {
            return Err(Error::Dimension {
                op: "item embeddings",
                left: (n_items, d),
                right: self.item_emb.shape(),
            });
        }
        if self.layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        self.layers.iter().try_for_each(|l| l.check(d))
    }
}

/// Embeddings of every layer `0..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerEmbeddings {
    pub users: Vec<DenseMatrix>,
    pub baskets: Vec<DenseMatrix>,
    pub items: Vec<DenseMatrix>,
}

impl LayerEmbeddings {
    pub fn n_layers(&self) -> usize {
        self.users.len() - 1
    }
}

/// Intermediates of one layer kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    /// `R̃_ub E_b`
    pub ub_agg: DenseMatrix,
    /// `R̃_ui E_i`
    pub ui_agg: DenseMatrix,
    /// `R̃_bu E_u`
    pub bu_agg: DenseMatrix,
    /// `R̃_bi E_i`
    pub bi_agg: DenseMatrix,
    /// `R̃_iu E_u`
    pub iu_agg: DenseMatrix,
    /// `R̃_ib E_b`
    pub ib_agg: DenseMatrix,
    pub pre_users: DenseMatrix,
    pub pre_baskets: DenseMatrix,
    pub pre_items: DenseMatrix,
}

/// `E·W_sp`.
pub fn self_propagate(emb: &DenseMatrix, w_sp: &DenseMatrix) -> Result<DenseMatrix> {
    emb.matmul(w_sp)
}

/// `(neighbor_agg ⊙ self_emb)·W`, where `neighbor_agg` is already degree-normalized.
pub fn interact(
    neighbor_agg: &DenseMatrix,
    self_emb: &DenseMatrix,
    w: &DenseMatrix,
) -> Result<DenseMatrix> {
    interact_with(neighbor_agg, self_emb, w, Precedence::HadamardFirst)
}

pub fn interact_with(
    neighbor_agg: &DenseMatrix,
    self_emb: &DenseMatrix,
    w: &DenseMatrix,
    precedence: Precedence,
) -> Result<DenseMatrix> {
    match precedence {
        Precedence::HadamardFirst => neighbor_agg.hadamard(self_emb)?.matmul(w),
        Precedence::TransformFirst => neighbor_agg.hadamard(&self_emb.matmul(w)?),
    }
}

/// Pre-activation of one aggregator: self term plus two interactive terms plus bias.
#[allow(clippy::too_many_arguments)]
pub(crate) fn aggregate(
    self_emb: &DenseMatrix,
    first_agg: &DenseMatrix,
    w_first: &DenseMatrix,
    second_agg: &DenseMatrix,
    w_second: &DenseMatrix,
    layer: &LayerParams,
    precedence: Precedence,
) -> Result<DenseMatrix> {
    let mut h = self_propagate(self_emb, &layer.w_sp)?;
    h.add_assign(&interact_with(first_agg, self_emb, w_first, precedence)?)?;
    h.add_assign(&interact_with(second_agg, self_emb, w_second, precedence)?)?;
    if let Some(b) = &layer.bias {
        h.add_row_broadcast(b.row(0))?;
    }
    Ok(h)
}

/// Next-layer basket embeddings.
pub fn basket_update(
    prop: &Propagation,
    users: &DenseMatrix,
    baskets: &DenseMatrix,
    items: &DenseMatrix,
    layer: &LayerParams,
    activation: Activation,
    precedence: Precedence,
) -> Result<DenseMatrix> {
    let h = aggregate(
        baskets,
        &prop.bu.spmm(users)?,
        &layer.w_ub,
        &prop.bi.spmm(items)?,
        &layer.w_ib,
        layer,
        precedence,
    )?;
    Ok(h.map(|x| activation.apply(x)))
}

/// Next-layer user embeddings.
pub fn user_update(
    prop: &Propagation,
    users: &DenseMatrix,
    baskets: &DenseMatrix,
    items: &DenseMatrix,
    layer: &LayerParams,
    activation: Activation,
    precedence: Precedence,
) -> Result<DenseMatrix> {
    let h = aggregate(
        users,
        &prop.ub.spmm(baskets)?,
        &layer.w_ub,
        &prop.ui.spmm(items)?,
        &layer.w_ui,
        layer,
        precedence,
    )?;
    Ok(h.map(|x| activation.apply(x)))
}

/// Next-layer item embeddings.
pub fn item_update(
    prop: &Propagation,
    users: &DenseMatrix,
    baskets: &DenseMatrix,
    items: &DenseMatrix,
    layer: &LayerParams,
    activation: Activation,
    precedence: Precedence,
) -> Result<DenseMatrix> {
    let h = aggregate(
        items,
        &prop.iu.spmm(users)?,
        &layer.w_ui,
        &prop.ib.spmm(baskets)?,
        &layer.w_ib,
        layer,
        precedence,
    )?;
    Ok(h.map(|x| activation.apply(x)))
}

/// Runs all layers on `graph`.
pub fn forward(graph: &UbiGraph, params: &ModelParams) -> Result<LayerEmbeddings> {
    let prop = Propagation::new(graph);
    Ok(forward_cached(&prop, params)?.0)
}

/// Runs all layers, also returning per-layer intermediates for backprop.
pub fn forward_cached(
    prop: &Propagation,
    params: &ModelParams,
) -> Result<(LayerEmbeddings, Vec<LayerCache>)> {
    params.check(prop.n_users(), prop.n_items())?;
    let d = params.dim();
    let act = params.activation;
    let prec = params.precedence;
    let mut emb = LayerEmbeddings {
        users: vec![params.user_emb.clone()],
        baskets: vec![DenseMatrix::zeros(prop.n_baskets(), d)],
        items: vec![params.item_emb.clone()],
    };
    let mut caches = Vec::with_capacity(params.n_layers());
    for layer in &params.layers {
        let (eu, eb, ei) = (
            emb.users.last().unwrap(),
            emb.baskets.last().unwrap(),
            emb.items.last().unwrap(),
        );
        let ub_agg = prop.ub.spmm(eb)?;
        let ui_agg = prop.ui.spmm(ei)?;
        let bu_agg = prop.bu.spmm(eu)?;
        let bi_agg = prop.bi.spmm(ei)?;
        let iu_agg = prop.iu.spmm(eu)?;
        let ib_agg = prop.ib.spmm(eb)?;
        let pre_users = aggregate(eu, &ub_agg, &layer.w_ub, &ui_agg, &layer.w_ui, layer, prec)?;
        let pre_baskets = aggregate(eb, &bu_agg, &layer.w_ub, &bi_agg, &layer.w_ib, layer, prec)?;
        let pre_items = aggregate(ei, &iu_agg, &layer.w_ui, &ib_agg, &layer.w_ib, layer, prec)?;
        emb.users.push(pre_users.map(|x| act.apply(x)));
        emb.baskets.push(pre_baskets.map(|x| act.apply(x)));
        emb.items.push(pre_items.map(|x| act.apply(x)));
        caches.push(LayerCache {
            ub_agg,
            ui_agg,
            bu_agg,
            bi_agg,
            iu_agg,
            ib_agg,
            pre_users,
            pre_baskets,
            pre_items,
        });
    }
    Ok((emb, caches))
}

/// Layer-concatenated embeddings `e* = e⁽⁰⁾ ‖ e⁽¹⁾ ‖ … ‖ e⁽ᴸ⁾`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputEmbeddings {
    pub users: DenseMatrix,
    pub baskets: DenseMatrix,
    pub items: DenseMatrix,
    pub dim: usize,
}

pub fn concat_output(layers: &LayerEmbeddings) -> OutputEmbeddings {
    let cat = |blocks: &[DenseMatrix]| {
        DenseMatrix::hconcat(&blocks.iter().collect::<Vec<_>>()).expect("layer heights agree")
    };
    OutputEmbeddings {
        users: cat(&layers.users),
        baskets: cat(&layers.baskets),
        items: cat(&layers.items),
        dim: layers.users[0].cols(),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl OutputEmbeddings {
    pub fn width(&self) -> usize {
        self.items.cols()
    }

    /// `ŷ(b, i) = e*_{u_b}·e*_i + e*_b·e*_i`.
    pub fn score(&self, owner: &[usize], basket: usize, item: usize) -> Result<f64> {
        let (u, b) = self.score_terms(owner, basket, item)?;
        Ok(u + b)
    }

    /// The user-item and basket-item terms of the score, separately.
    pub fn score_terms(&self, owner: &[usize], basket: usize, item: usize) -> Result<(f64, f64)> {
        let check = |what, index, len| {
            if index >= len {
                Err(Error::IndexOutOfRange { what, index, len })
            } else {
                Ok(())
            }
        };
        check("basket", basket, self.baskets.rows().min(owner.len()))?;
        check("item", item, self.items.rows())?;
        let u = owner[basket];
        check("user", u, self.users.rows())?;
        let ei = self.items.row(item);
        Ok((
            dot(self.users.row(u), ei),
            dot(self.baskets.row(basket), ei),
        ))
    }
}

/// Concatenated embedding of a basket that is not part of the graph, owned
/// by `user` and holding `items`. The basket aggregator runs on the fly from
/// a zero initial embedding with the trained weights and the graph's user and
/// item embeddings.
pub fn cold_basket_embedding(
    layers: &LayerEmbeddings,
    params: &ModelParams,
    user: usize,
    items: &[usize],
) -> Result<Vec<f64>> {
    let d = params.dim();
    let n_items = layers.items[0].rows();
    if let Some(&bad) = items.iter().find(|&&i| i >= n_items) {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: bad,
            len: n_items,
        });
    }
    let mut current = DenseMatrix::zeros(1, d);
    let mut out = current.as_slice().to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        let owner_emb = DenseMatrix::new(1, d, layers.users[l].row(user).to_vec())?;
        let mut mean = vec![0.0; d];
        for &i in items {
            for (m, &v) in mean.iter_mut().zip(layers.items[l].row(i)) {
                *m += v;
            }
        }
        if !items.is_empty() {
            let inv = 1.0 / items.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
        }
        let item_agg = DenseMatrix::new(1, d, mean)?;
        let h = aggregate(
            &current,
            &owner_emb,
            &layer.w_ub,
            &item_agg,
            &layer.w_ib,
            layer,
            params.precedence,
        )?;
        current = h.map(|x| params.activation.apply(x));
        out.extend_from_slice(current.as_slice());
    }
    Ok(out)
}
