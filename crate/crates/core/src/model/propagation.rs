use crate::graph::{Relation, UbiGraph};
use crate::kernels::InteractionMatrix;

/// Degree-normalized relation matrices for one graph, oriented with the
/// updated node type as rows, plus their transposes for backpropagation.
///
/// `bu` has exactly one entry per row (the basket's owner), so `bu·E_u`
/// gathers owner embeddings unchanged.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub ub: InteractionMatrix,
    pub ui: InteractionMatrix,
    pub bu: InteractionMatrix,
    pub bi: InteractionMatrix,
    pub iu: InteractionMatrix,
    pub ib: InteractionMatrix,
    pub(crate) ub_t: InteractionMatrix,
    pub(crate) ui_t: InteractionMatrix,
    pub(crate) bu_t: InteractionMatrix,
    pub(crate) bi_t: InteractionMatrix,
    pub(crate) iu_t: InteractionMatrix,
    pub(crate) ib_t: InteractionMatrix,
    owner: Vec<usize>,
    n_users: usize,
    n_baskets: usize,
    n_items: usize,
}

impl Propagation {
    pub fn new(graph: &UbiGraph) -> Self {
        let r_ub = graph.interaction_matrix(Relation::Ub);
        let r_bi = graph.interaction_matrix(Relation::Bi);
        let r_ui = graph.interaction_matrix(Relation::Ui);
        let ub = r_ub.normalize_rows();
        let bu = r_ub.transpose().normalize_rows();
        let ui = r_ui.normalize_rows();
        let iu = r_ui.transpose().normalize_rows();
        let bi = r_bi.normalize_rows();
        let ib = r_bi.transpose().normalize_rows();
        Propagation {
            ub_t: ub.transpose(),
            ui_t: ui.transpose(),
            bu_t: bu.transpose(),
            bi_t: bi.transpose(),
            iu_t: iu.transpose(),
            ib_t: ib.transpose(),
            ub,
            ui,
            bu,
            bi,
            iu,
            ib,
            owner: graph.owners().to_vec(),
            n_users: graph.n_users(),
            n_baskets: graph.n_baskets(),
            n_items: graph.n_items(),
        }
    }

    /// Owner of each basket.
    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_baskets(&self) -> usize {
        self.n_baskets
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }
}
