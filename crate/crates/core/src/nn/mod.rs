//! Small reverse-mode differentiation library and the layers built on it.

pub mod check;
pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Graph, Var};
pub use layers::{Activation, AttentionBlock, EdgeList, GatLayer, LayerNorm, Linear};
pub use params::{Adam, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
