//! Dense sequence tensors with tape-based reverse-mode differentiation.
//!
//! Everything is `f64`. A [`Graph`] records primitive applications while the
//! forward pass runs; [`Graph::backward`] replays the tape in reverse and
//! returns a [`Gradients`] table for every leaf that asked for one.

mod adam;
mod conv;
pub mod gradcheck;
mod graph;
pub mod init;
mod ops;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::ConvMode;
pub use graph::{BackwardCtx, BackwardFn, Gradients, Graph, Var};
pub use params::{BoundParams, ParamStore};
pub use tensor::SeqTensor;
