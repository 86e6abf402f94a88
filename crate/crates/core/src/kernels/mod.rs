//! Numerical substrate shared by the model, trainer and evaluator: row-major
//! dense matrices, compressed-row sparse matrices, activations and seeded
//! initialization.
//!
//! All kernels reduce each output entry in a fixed order. Row-parallel
//! execution never splits a reduction, so results are bit-identical for any
//! thread count.

mod activation;
mod dense;
mod rng;
mod sparse;

pub use activation::{activation, sigmoid, softplus, Activation, LEAKY_RELU_SLOPE};
pub use dense::{xavier_init, DenseMatrix};
pub use rng::RngStream;
pub use sparse::{InteractionMatrix, MatrixKind};

/// `s · d` for a sparse `s`.
pub fn spmm(s: &InteractionMatrix, d: &DenseMatrix) -> crate::Result<DenseMatrix> {
    s.spmm(d)
}

pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> crate::Result<DenseMatrix> {
    a.hadamard(b)
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> crate::Result<DenseMatrix> {
    a.matmul(b)
}

pub fn add(a: &DenseMatrix, b: &DenseMatrix) -> crate::Result<DenseMatrix> {
    a.add(b)
}

pub fn scale(a: &DenseMatrix, c: f64) -> DenseMatrix {
    a.scale(c)
}
