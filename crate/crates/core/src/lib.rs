pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
