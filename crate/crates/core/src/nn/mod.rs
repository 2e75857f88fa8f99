//! Minimal reverse-mode autodiff over NCHW `f32` tensors.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! seeds output cotangents and sweeps the tape in reverse. Parameters live in
//! [`ParamSet`]s outside the tape so several networks (and several uses of the
//! same network in one pass) share storage and accumulate gradients.

mod adam;
mod kernels;
mod param;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use param::{GradSet, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
