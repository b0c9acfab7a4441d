//! Transformer inference and context-mixing analysis for speech recognition
//! models operating on frame-feature sequences.

pub mod ablation;
pub mod alignment;
pub mod commands;
pub mod cue;
pub mod error;
pub mod manifest;
pub mod mixing;
pub mod model;
pub mod probing;
pub mod render;
pub mod report;
pub mod selection;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{Model, ModelKind, ModelSpec, Vocab};
pub use tensor::Tensor;

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}
