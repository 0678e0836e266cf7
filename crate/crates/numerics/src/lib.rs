//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Values are `f64` throughout. Graphs are built per forward pass and thrown
//! away after [`Graph::backward`]; trainable tensors live in a
//! [`ParamStore`] and are bound onto each new graph.

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod kernels;
pub mod mlp;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{NumericsError, Result};
pub use graph::{Gradients, Graph, SplatAffine, Var};
pub use init::Initializer;
pub use mlp::{mlp, Mlp};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;
