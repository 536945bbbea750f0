//! Neural renderers: three network families sharing one bounded output head.
//!
//! All layers run in `f64` with hand-written backward passes.

mod dense;
mod gru;
pub mod model;
pub mod ops;
pub mod params;
pub mod spec;
pub mod triplet;
mod unet;

pub use model::{backward, forward, forward_batch, gradient, init_params, layout, render, BatchForward};
pub use params::{Gradients, Init, NamedTensor, ParamSpec, Parameters, TensorRole};
pub use spec::{unet_shapes, Architecture, ModelSpec, UnetShapes, HEAD_PLANES};
pub use triplet::{
    apply_triplet, apply_triplet_backward, head_backward, head_forward, oracle_triplet, reconstruct, MaskTriplet,
    PHASE_EPS,
};
pub use unet::{BN_EPS, BN_MOMENTUM};

/// Batch-norm behavior; other layers are unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and emit running-statistic updates.
    Train,
    /// Normalize with running statistics.
    Eval,
}
