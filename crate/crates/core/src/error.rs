use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    #[error(
        "empty graph after filtering with min_basket_size={min_basket_size}: \
         dropped {dropped_baskets} of {total_baskets} baskets, \
         {dropped_users} users and {dropped_items} items"
    )]
    EmptyGraph {
        min_basket_size: usize,
        total_baskets: usize,
        dropped_baskets: usize,
        dropped_users: usize,
        dropped_items: usize,
    },

    #[error(
        "basket {basket} has {size} item(s); splitting needs at least 2 (raise min_basket_size)"
    )]
    BasketTooSmall { basket: String, size: usize },

    #[error("index out of range: {what} {index} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("non-finite gradient in {param} at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("non-finite loss at epoch {epoch}, step {step}: {loss}")]
    NonFiniteLoss { epoch: usize, step: u64, loss: f64 },

    #[error("checkpoint was built for graph {expected} but the loaded graph is {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
