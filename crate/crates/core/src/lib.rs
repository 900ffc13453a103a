//! Graph-classification knowledge distillation: message-passing GNN teachers
//! (GIN, GCN) distilled into MLP and 1-hop GA-MLP students with graph-level,
//! cluster-level and random-walk path-level structural losses.
//!
//! The differentiable core ([`tensor`], [`models`], [`distill`]) is generic
//! over the floating-point [`Scalar`]; the aliases below fix it to `f64`,
//! which the training pipeline uses throughout.

pub mod distill;
pub mod dynamic;
pub mod error;
pub mod graph;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod structprep;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense matrix in the pipeline's precision.
pub type Matrix = tensor::Tensor<f64>;
pub type Tape = tensor::Tape<f64>;
pub type ParamStore = tensor::ParamStore<f64>;
pub type Model = models::Model<f64>;
pub type GraphBatch = models::GraphBatch<f64>;
pub type ForwardOutputs = models::ForwardOutputs;
pub type GraphOutputs = models::GraphOutputs<f64>;
