//! Minimal reverse-mode automatic differentiation over channel-first tensors.
//!
//! A [`Graph`] records every operation of one forward pass (one sample) together
//! with its output value. [`Graph::backward`] walks the tape in reverse and returns
//! gradients for every trainable parameter that took part in the computation.
//! Parameters live in a [`ParamStore`] shared read-only by all graphs.

mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var, PROB_CLIP};
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
